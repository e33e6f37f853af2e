//! Dense small-tensor arithmetic: sum-product contractions, outer products,
//! normalisation, expected-log (digamma) transforms and stabilised softmax.
//!
//! Tensors are stored row-major in one contiguous buffer with explicit
//! strides. The leading axis always indexes outcome or next-state levels;
//! trailing axes index parent-factor states (and, for transitions, a final
//! path axis). A "column" is the fibre along the leading axis at a fixed
//! combination of trailing indices.

use crate::error::{Error, Result};
use crate::special::digamma;
use serde::{Deserialize, Serialize};

/// Floor substituted for deliberately-zero cells inside `elog`; zero columns
/// are an error, never floored.
pub const COUNT_FLOOR: f64 = 1e-12;

/// Dense row-major tensor of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Weight attached to one axis of a contraction: either the axis left free
/// (the output axis) or a vector of per-index weights.
pub enum AxisWeight<'a> {
    Free,
    Weights(&'a [f64]),
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} wants {len} elements, got {}",
                shape,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Identity matrix as a rank-2 tensor.
    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.shape[i + 1];
        }
        s
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let strides = self.strides();
        idx.iter().zip(&strides).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let k = self.flat_index(idx);
        self.data[k] = value;
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Number of columns (product of trailing-axis sizes).
    pub fn n_columns(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Length of the leading axis.
    pub fn n_levels(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// View of column `j`: element `i` lives at `i * n_columns() + j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let cols = self.n_columns();
        (0..self.n_levels()).map(move |i| self.data[i * cols + j])
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.column(j).sum()
    }

    /// Copy of the tensor with `extra` new indices appended to `axis`,
    /// filled with `fill`. Existing entries keep their positions.
    pub fn extend_axis(&self, axis: usize, extra: usize, fill: f64) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::Argument(format!(
                "extend_axis {axis} out of range for rank {}",
                self.rank()
            )));
        }
        let mut new_shape = self.shape.clone();
        new_shape[axis] += extra;
        let mut out = Tensor::filled(&new_shape, fill);
        let strides = self.strides();
        let out_strides = out.strides();
        for (flat, &x) in self.data.iter().enumerate() {
            let mut rem = flat;
            let mut out_flat = 0;
            for k in 0..self.rank() {
                let i = rem / strides[k];
                rem %= strides[k];
                out_flat += i * out_strides[k];
            }
            out.data[out_flat] = x;
        }
        Ok(out)
    }

    /// Copy of the tensor with one trailing axis of length `size` appended;
    /// index 0 carries the existing entries, the rest are `fill`.
    pub fn append_axis(&self, size: usize, fill: f64) -> Result<Tensor> {
        if size == 0 {
            return Err(Error::Argument("append_axis of length zero".into()));
        }
        let mut new_shape = self.shape.clone();
        new_shape.push(size);
        let mut out = Tensor::filled(&new_shape, fill);
        for (flat, &x) in self.data.iter().enumerate() {
            out.data[flat * size] = x;
        }
        Ok(out)
    }

    /// Rank-2 slice of a rank-3 tensor at trailing index `u`.
    pub fn slice_last(&self, u: usize) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::Argument(format!(
                "slice_last wants rank 3, got {}",
                self.rank()
            )));
        }
        let (n0, n1, n2) = (self.shape[0], self.shape[1], self.shape[2]);
        if u >= n2 {
            return Err(Error::Argument(format!("slice {u} out of range {n2}")));
        }
        let mut data = Vec::with_capacity(n0 * n1);
        for i in 0..n0 {
            for j in 0..n1 {
                data.push(self.data[i * n1 * n2 + j * n2 + u]);
            }
        }
        Tensor::from_vec(&[n0, n1], data)
    }

    /// self += scale * other (same shape).
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "add_scaled: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "hadamard: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    /// Sum-product contraction of one axis against a weight vector.
    ///
    /// `result[i..] = sum_j t[.., j at axis, ..] * v[j]`, reducing the rank
    /// by one. `1 (.) A` along axis 0 is the column sum; `A (.) 1` along the
    /// last axis is the row sum.
    pub fn contract(&self, v: &[f64], axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::Argument(format!(
                "contract axis {axis} out of range for rank {}",
                self.rank()
            )));
        }
        if v.len() != self.shape[axis] {
            return Err(Error::Shape(format!(
                "contract: vector length {} vs axis size {}",
                v.len(),
                self.shape[axis]
            )));
        }
        let out_shape: Vec<usize> = self
            .shape
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != axis)
            .map(|(_, &d)| d)
            .collect();
        let mut out = Tensor::zeros(&out_shape);
        let stride = self.strides()[axis];
        let block = stride * self.shape[axis];
        for (flat, &x) in self.data.iter().enumerate() {
            let j = (flat / stride) % self.shape[axis];
            let w = v[j];
            if w == 0.0 {
                continue;
            }
            let out_idx = (flat / block) * stride + flat % stride;
            out.data[out_idx] += x * w;
        }
        Ok(out)
    }

    /// Weighted marginal over all axes, leaving exactly one axis free.
    ///
    /// Skips zero-weight indices, so contractions against near-one-hot
    /// posteriors only touch the supported slices.
    pub fn weighted_marginal(&self, weights: &[AxisWeight]) -> Result<Vec<f64>> {
        if weights.len() != self.rank() {
            return Err(Error::Shape(format!(
                "weighted_marginal: {} weights for rank {}",
                weights.len(),
                self.rank()
            )));
        }
        let free_axes: Vec<usize> = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| matches!(w, AxisWeight::Free))
            .map(|(k, _)| k)
            .collect();
        if free_axes.len() != 1 {
            return Err(Error::Argument(format!(
                "weighted_marginal wants exactly one free axis, got {}",
                free_axes.len()
            )));
        }
        let free = free_axes[0];
        for (k, w) in weights.iter().enumerate() {
            if let AxisWeight::Weights(v) = w {
                if v.len() != self.shape[k] {
                    return Err(Error::Shape(format!(
                        "weighted_marginal axis {k}: {} weights vs size {}",
                        v.len(),
                        self.shape[k]
                    )));
                }
            }
        }
        let strides = self.strides();
        let mut out = vec![0.0; self.shape[free]];
        // Support lists per contracted axis: (flat offset, weight).
        let supports: Vec<Vec<(usize, f64)>> = weights
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != free)
            .map(|(k, w)| match w {
                AxisWeight::Weights(v) => v
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(i, &x)| (i * strides[k], x))
                    .collect(),
                AxisWeight::Free => unreachable!(),
            })
            .collect();
        let free_stride = strides[free];
        let free_len = self.shape[free];
        // Odometer over the support lists.
        let mut cursor = vec![0usize; supports.len()];
        if supports.iter().any(|s| s.is_empty()) {
            return Ok(out);
        }
        loop {
            let mut offset = 0;
            let mut weight = 1.0;
            for (c, s) in cursor.iter().zip(&supports) {
                let (o, w) = s[*c];
                offset += o;
                weight *= w;
            }
            for i in 0..free_len {
                out[i] += weight * self.data[offset + i * free_stride];
            }
            // advance odometer
            let mut k = supports.len();
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                cursor[k] += 1;
                if cursor[k] < supports[k].len() {
                    break;
                }
                cursor[k] = 0;
            }
        }
    }

    /// Full weighted sum over every axis (no free axis).
    pub fn weighted_sum(&self, weights: &[&[f64]]) -> Result<f64> {
        if weights.len() != self.rank() {
            return Err(Error::Shape(format!(
                "weighted_sum: {} weights for rank {}",
                weights.len(),
                self.rank()
            )));
        }
        for (k, v) in weights.iter().enumerate() {
            if v.len() != self.shape[k] {
                return Err(Error::Shape(format!(
                    "weighted_sum axis {k}: {} weights vs size {}",
                    v.len(),
                    self.shape[k]
                )));
            }
        }
        let strides = self.strides();
        let supports: Vec<Vec<(usize, f64)>> = weights
            .iter()
            .enumerate()
            .map(|(k, v)| {
                v.iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(i, &x)| (i * strides[k], x))
                    .collect()
            })
            .collect();
        if supports.iter().any(|s: &Vec<(usize, f64)>| s.is_empty()) {
            return Ok(0.0);
        }
        let mut cursor = vec![0usize; supports.len()];
        let mut acc = 0.0;
        loop {
            let mut offset = 0;
            let mut weight = 1.0;
            for (c, s) in cursor.iter().zip(&supports) {
                let (o, w) = s[*c];
                offset += o;
                weight *= w;
            }
            acc += weight * self.data[offset];
            let mut k = supports.len();
            loop {
                if k == 0 {
                    return Ok(acc);
                }
                k -= 1;
                cursor[k] += 1;
                if cursor[k] < supports[k].len() {
                    break;
                }
                cursor[k] = 0;
            }
        }
    }
}

/// Categorical distribution: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorical(Vec<f64>);

impl Categorical {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Argument("empty categorical".into()));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Argument(format!("negative or NaN probability in {probs:?}")));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("categorical sums to {sum}, not 1")));
        }
        Ok(Categorical(probs))
    }

    /// Normalise arbitrary nonnegative weights into a categorical.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::DegenerateTensor("categorical weights sum to zero".into()));
        }
        Ok(Categorical(weights.iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        Categorical(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, k: usize) -> Self {
        let mut p = vec![0.0; n];
        p[k] = 1.0;
        Categorical(p)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; ties resolved to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }

    /// KL divergence to another categorical of the same length, with the
    /// 0 ln 0 = 0 convention. Infinite when the support escapes `other`.
    pub fn kl(&self, other: &Categorical) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &q)| p * (p.ln() - q.ln()))
            .sum()
    }
}

/// Outer product of one or more categorical-like vectors.
///
/// `result[i, j, ..] = v1[i] * v2[j] * ..`; for unit-mass inputs the result
/// has unit total mass.
pub fn outer(vs: &[&[f64]]) -> Result<Tensor> {
    if vs.is_empty() {
        return Err(Error::Argument("outer product of empty vector list".into()));
    }
    let shape: Vec<usize> = vs.iter().map(|v| v.len()).collect();
    let mut out = Tensor::zeros(&shape);
    let strides = out.strides();
    let len = out.len();
    for flat in 0..len {
        let mut p = 1.0;
        for (k, v) in vs.iter().enumerate() {
            let i = (flat / strides[k]) % shape[k];
            p *= v[i];
            if p == 0.0 {
                break;
            }
        }
        out.data[flat] = p;
    }
    Ok(out)
}

/// Normalisation mode for count tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeMode {
    /// Each leading-axis fibre sums to one (recovers conditional likelihoods).
    Columns,
    /// The whole tensor sums to one (recovers the joint distribution).
    Joint,
}

/// Normalise a count tensor into conditional or joint probabilities.
pub fn normalize(t: &Tensor, mode: NormalizeMode) -> Result<Tensor> {
    let mut out = t.clone();
    match mode {
        NormalizeMode::Joint => {
            let total = t.total();
            if !(total > 0.0) {
                return Err(Error::DegenerateTensor("joint normalise of zero tensor".into()));
            }
            for x in out.data.iter_mut() {
                *x /= total;
            }
        }
        NormalizeMode::Columns => {
            let cols = t.n_columns();
            let levels = t.n_levels();
            for j in 0..cols {
                let sum = t.column_sum(j);
                if !(sum > 0.0) {
                    return Err(Error::DegenerateTensor(format!(
                        "column {j} sums to {sum}"
                    )));
                }
                for i in 0..levels {
                    out.data[i * cols + j] /= sum;
                }
            }
        }
    }
    Ok(out)
}

/// Expected log-probabilities of a Dirichlet count tensor, computed per
/// column as psi(count) - psi(column sum).
///
/// Deliberately-zero cells (structural zeros of an initialised column) are
/// floored at `COUNT_FLOOR`; an all-zero column is an error.
pub fn elog(t: &Tensor) -> Result<Tensor> {
    let mut out = t.clone();
    let cols = t.n_columns();
    let levels = t.n_levels();
    for j in 0..cols {
        let sum = t.column_sum(j);
        if !(sum > 0.0) {
            return Err(Error::DegenerateTensor(format!("elog: column {j} sums to {sum}")));
        }
        let psi_sum = digamma(sum)?;
        for i in 0..levels {
            let c = t.data[i * cols + j];
            if c < 0.0 {
                return Err(Error::NumericDomain(format!("elog: negative count {c}")));
            }
            let c = c.max(COUNT_FLOOR);
            out.data[i * cols + j] = digamma(c)? - psi_sum;
        }
    }
    Ok(out)
}

/// Stabilised softmax of `precision * x`.
pub fn softmax(x: &[f64], precision: f64) -> Result<Categorical> {
    if x.is_empty() {
        return Err(Error::Argument("softmax of empty vector".into()));
    }
    if x.iter().any(|v| v.is_nan()) || !(precision > 0.0) {
        return Err(Error::Argument("softmax requires finite inputs and positive precision".into()));
    }
    let m = x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(precision * b));
    let exps: Vec<f64> = x.iter().map(|&v| (precision * v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Categorical::new(exps.iter().map(|e| e / sum).collect()).map_err(|_| {
        Error::Argument("softmax produced a degenerate distribution".into())
    })
}
