//! The statistical-manifold embedding of learned latent states: symmetric
//! KL divergences between likelihood columns, a similarity matrix, and the
//! classical multidimensional-scaling eigen-embedding.

use crate::error::{Error, Result};
use crate::model::GenerativeModel;
use crate::tensor::{normalize, NormalizeMode};
use nalgebra::DMatrix;

/// Floor applied to normalised columns before divergence; reduced models
/// contain exact zeros.
pub const DIVERGENCE_FLOOR: f64 = 1e-8;

/// Principal-coordinate embedding of latent states.
#[derive(Debug, Clone)]
pub struct Embedding {
    /// Similarity matrix rho, unit diagonal, symmetric.
    pub similarity: Vec<Vec<f64>>,
    /// Eigenvalues of rho, descending.
    pub eigenvalues: Vec<f64>,
    /// coordinates[i][k]: state i's k-th principal coordinate
    /// (eigenvector scaled by the square root of the clamped eigenvalue).
    pub coordinates: Vec<Vec<f64>>,
    /// Total magnitude of clamped negative eigenvalues.
    pub stress: f64,
}

/// Symmetric (Jeffreys) KL divergence between two distributions, with an
/// epsilon floor so zero cells stay comparable.
pub fn jeffreys(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let a = a.max(DIVERGENCE_FLOOR);
        let b = b.max(DIVERGENCE_FLOOR);
        d += (a - b) * (a.ln() - b.ln());
    }
    d
}

/// Embed the given latent-state combinations by their likelihood columns.
///
/// Per-modality Jeffreys divergences aggregate as a root-sum-square
/// distance; distances rescale so the farthest pair sits at 2 (antipodal on
/// the unit hypersphere), giving the similarity rho = 1 - dist^2 / 2 whose
/// principal eigenvectors are the embedding coordinates. Negative
/// eigenvalues are clamped and reported as stress.
pub fn embed(m: &GenerativeModel, states: &[Vec<usize>]) -> Result<Embedding> {
    let n = states.len();
    if n < 2 {
        return Err(Error::DegenerateEmbedding(format!(
            "need at least 2 states, got {n}"
        )));
    }
    for combo in states {
        if combo.len() != m.factors.len() {
            return Err(Error::Argument(format!(
                "state combination {combo:?} does not index {} factors",
                m.factors.len()
            )));
        }
    }

    // per-modality normalised columns for each requested combination
    let mut columns: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(m.modalities.len()); n];
    for (g, modality) in m.modalities.iter().enumerate() {
        let probs = normalize(&modality.likelihood.counts, NormalizeMode::Columns)?;
        let parents = m.parent_indices(g)?;
        for (i, combo) in states.iter().enumerate() {
            let mut idx = vec![0usize; 1 + parents.len()];
            for (k, &p) in parents.iter().enumerate() {
                idx[k + 1] = combo[p];
            }
            let col: Vec<f64> = (0..modality.n_levels)
                .map(|lvl| {
                    idx[0] = lvl;
                    probs.get(&idx)
                })
                .collect();
            columns[i].push(col);
        }
    }

    // root-sum-square aggregate of per-modality Jeffreys divergences
    let mut dist = vec![vec![0.0; n]; n];
    let mut max_d: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = (0..m.modalities.len())
                .map(|g| {
                    let d = jeffreys(&columns[i][g], &columns[j][g]);
                    d * d
                })
                .sum();
            let d = d2.sqrt();
            dist[i][j] = d;
            dist[j][i] = d;
            max_d = max_d.max(d);
        }
    }
    if !(max_d > 0.0) {
        // all columns identical: rho is all ones
        max_d = 1.0;
    }

    let mut rho = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let delta = 2.0 * dist[i][j] / max_d;
            rho[i][j] = 1.0 - 0.5 * delta * delta;
        }
    }

    let mat = DMatrix::from_fn(n, n, |i, j| rho[i][j]);
    let eig = mat.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut eigenvalues = Vec::with_capacity(n);
    let mut coordinates = vec![vec![0.0; n]; n];
    let mut stress = 0.0;
    for (k, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        eigenvalues.push(lambda);
        let clamped = lambda.max(0.0);
        if lambda < 0.0 {
            stress += -lambda;
        }
        let col = eig.eigenvectors.column(src);
        // deterministic sign: the largest-magnitude entry is positive
        let mut pivot = 0;
        for i in 0..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        let scale = clamped.sqrt() * sign;
        for i in 0..n {
            coordinates[i][k] = col[i] * scale;
        }
    }

    Ok(Embedding { similarity: rho, eigenvalues, coordinates, stress })
}
