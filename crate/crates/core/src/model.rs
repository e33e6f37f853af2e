//! The factorised POMDP container: factors (states + paths), outcome
//! modalities, Dirichlet count tensors, preferences and hyperparameters,
//! with validation and a bit-stable on-disk format (`.gm.json`).

use crate::error::{Error, Result};
use crate::tensor::{normalize, NormalizeMode, Categorical, Tensor};
use serde::{Deserialize, Serialize};

/// Current `.gm.json` format version.
pub const FORMAT_VERSION: u32 = 1;

/// Nonnegative concentration counts over one outcome/next-state axis times
/// flattened parent-state axes, with per-axis labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletTensor {
    pub counts: Tensor,
    pub axis_labels: Vec<String>,
}

impl DirichletTensor {
    pub fn new(counts: Tensor, axis_labels: Vec<String>) -> Self {
        DirichletTensor { counts, axis_labels }
    }

    /// Invariant violations, if any, prefixed with `context`.
    pub fn violations(&self, context: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.axis_labels.len() != self.counts.rank() {
            out.push(format!(
                "{context}: {} axis labels for rank {}",
                self.axis_labels.len(),
                self.counts.rank()
            ));
        }
        if self.counts.len() as u64 >= (1u64 << 31) {
            out.push(format!("{context}: {} elements exceeds 2^31", self.counts.len()));
        }
        if self.counts.data().iter().any(|&c| !(c >= 0.0)) {
            out.push(format!("{context}: negative or NaN count"));
        }
        for j in 0..self.counts.n_columns() {
            if !(self.counts.column_sum(j) > 0.0) {
                out.push(format!("{context}: all-zero column {j}"));
                break;
            }
        }
        out
    }
}

/// One latent factor: hidden states plus the paths that move them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub id: String,
    pub n_states: usize,
    pub n_paths: usize,
    /// Transition counts, shape [next state, previous state, path].
    pub transition: DirichletTensor,
    /// Initial-state prior counts, shape [state].
    pub initial: DirichletTensor,
    /// Path prior counts, shape [path].
    pub path_prior: DirichletTensor,
    pub controllable: bool,
}

impl Factor {
    /// Fresh factor with flat priors and a precise stationary first path.
    pub fn new(id: &str, n_states: usize, n_paths: usize, concentration: f64) -> Self {
        let mut transition = Tensor::zeros(&[n_states, n_states, n_paths]);
        for u in 0..n_paths {
            for j in 0..n_states {
                for i in 0..n_states {
                    let v = if u == 0 {
                        if i == j {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        concentration
                    };
                    transition.set(&[i, j, u], v);
                }
            }
        }
        Factor {
            id: id.to_string(),
            n_states,
            n_paths,
            transition: DirichletTensor::new(
                transition,
                vec![format!("{id}:next"), format!("{id}:prev"), format!("{id}:path")],
            ),
            initial: DirichletTensor::new(
                Tensor::filled(&[n_states], 1.0),
                vec![id.to_string()],
            ),
            path_prior: DirichletTensor::new(
                Tensor::filled(&[n_paths], 1.0),
                vec![format!("{id}:path")],
            ),
            controllable: false,
        }
    }

    /// True when the column-normalised first path slice is exactly the
    /// identity mapping.
    pub fn stationary_first_path(&self) -> bool {
        let t = &self.transition.counts;
        for j in 0..self.n_states {
            let col: Vec<f64> = (0..self.n_states).map(|i| t.get(&[i, j, 0])).collect();
            let sum: f64 = col.iter().sum();
            if !(sum > 0.0) {
                return false;
            }
            for (i, &c) in col.iter().enumerate() {
                let p = c / sum;
                let want = if i == j { 1.0 } else { 0.0 };
                if (p - want).abs() > 0.0 {
                    return false;
                }
            }
        }
        true
    }
}

/// One outcome channel with a fixed set of discrete levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modality {
    pub id: String,
    pub n_levels: usize,
    /// Likelihood counts, shape [level, states of each parent in order].
    pub likelihood: DirichletTensor,
    /// Log-prior preference over outcome levels, natural units.
    pub preference: Vec<f64>,
    /// Parent factor ids, in likelihood axis order.
    pub parents: Vec<String>,
}

/// A factorised generative model of an observation stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    pub factors: Vec<Factor>,
    pub modalities: Vec<Modality>,
    /// Dirichlet magnitude used to initialise new likelihood/transition columns.
    pub concentration: f64,
    /// Selection precision for update gating.
    pub alpha: f64,
    pub planning_depth: usize,
}

/// Soft categorical evidence: one probability vector per modality, in model
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<Categorical>);

impl Observation {
    pub fn modalities(&self) -> &[Categorical] {
        &self.0
    }
}

/// A fixed-length sequence of observations; the unit of inference and of
/// structure scoring. Default length is two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch(pub Vec<Observation>);

impl Epoch {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn steps(&self) -> &[Observation] {
        &self.0
    }
}

impl GenerativeModel {
    /// Minimal model: one factor with a single state and a single stationary
    /// path; every modality gets a likelihood column filled with
    /// `concentration`.
    pub fn new_minimal(modalities: &[(&str, usize)], concentration: f64) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::Argument("new_minimal requires at least one modality".into()));
        }
        if !(concentration > 0.0) {
            return Err(Error::Argument(format!(
                "concentration must be positive, got {concentration}"
            )));
        }
        let factor = Factor::new("factor-0", 1, 1, concentration);
        let mods = modalities
            .iter()
            .map(|(id, n_levels)| Modality {
                id: id.to_string(),
                n_levels: *n_levels,
                likelihood: DirichletTensor::new(
                    Tensor::filled(&[*n_levels, 1], concentration),
                    vec![id.to_string(), "factor-0".to_string()],
                ),
                preference: vec![0.0; *n_levels],
                parents: vec!["factor-0".to_string()],
            })
            .collect();
        Ok(GenerativeModel {
            factors: vec![factor],
            modalities: mods,
            concentration,
            alpha: 1.0,
            planning_depth: 1,
        })
    }

    pub fn factor_index(&self, id: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.id == id)
    }

    /// Parent factor indices of modality `g`, in likelihood axis order.
    pub fn parent_indices(&self, g: usize) -> Result<Vec<usize>> {
        self.modalities[g]
            .parents
            .iter()
            .map(|id| {
                self.factor_index(id).ok_or_else(|| {
                    Error::Argument(format!("modality {} references missing factor {id}", g))
                })
            })
            .collect()
    }

    /// Column-normalised likelihood of modality `g`.
    pub fn likelihood_probs(&self, g: usize) -> Result<Tensor> {
        normalize(&self.modalities[g].likelihood.counts, NormalizeMode::Columns)
    }

    /// Column-normalised transition tensor of factor `f`.
    pub fn transition_probs(&self, f: usize) -> Result<Tensor> {
        normalize(&self.factors[f].transition.counts, NormalizeMode::Columns)
    }

    /// All invariant violations; an empty list means the model is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.factors.is_empty() {
            out.push("model has no factors".into());
        }
        if self.modalities.is_empty() {
            out.push("model has no modalities".into());
        }
        if !(self.concentration > 0.0) {
            out.push(format!("nonpositive concentration {}", self.concentration));
        }
        if !(self.alpha > 0.0) {
            out.push(format!("nonpositive alpha {}", self.alpha));
        }
        if self.planning_depth < 1 {
            out.push("planning_depth must be >= 1".into());
        }
        for f in &self.factors {
            let ctx = format!("factor {}", f.id);
            if f.n_states < 1 {
                out.push(format!("{ctx}: n_states < 1"));
            }
            if f.n_paths < 1 {
                out.push(format!("{ctx}: n_paths < 1"));
            }
            if f.transition.counts.shape() != [f.n_states, f.n_states, f.n_paths] {
                out.push(format!(
                    "{ctx}: transition shape {:?} != [{}, {}, {}]",
                    f.transition.counts.shape(),
                    f.n_states,
                    f.n_states,
                    f.n_paths
                ));
            } else if !f.stationary_first_path() {
                out.push(format!("{ctx}: path 0 is not the identity mapping"));
            }
            if f.initial.counts.shape() != [f.n_states] {
                out.push(format!("{ctx}: initial shape {:?}", f.initial.counts.shape()));
            }
            if f.path_prior.counts.shape() != [f.n_paths] {
                out.push(format!("{ctx}: path prior shape {:?}", f.path_prior.counts.shape()));
            }
            out.extend(f.transition.violations(&format!("{ctx} transition")));
            out.extend(f.initial.violations(&format!("{ctx} initial")));
            out.extend(f.path_prior.violations(&format!("{ctx} path prior")));
        }
        for m in &self.modalities {
            let ctx = format!("modality {}", m.id);
            if m.n_levels < 2 {
                out.push(format!("{ctx}: n_levels < 2"));
            }
            if m.preference.len() != m.n_levels {
                out.push(format!("{ctx}: preference length {}", m.preference.len()));
            }
            if m.preference.iter().any(|p| !p.is_finite()) {
                out.push(format!("{ctx}: non-finite preference"));
            }
            let mut want_shape = vec![m.n_levels];
            let mut parents_ok = true;
            for pid in &m.parents {
                match self.factors.iter().find(|f| &f.id == pid) {
                    Some(f) => want_shape.push(f.n_states),
                    None => {
                        out.push(format!("{ctx}: parent {pid} does not exist"));
                        parents_ok = false;
                    }
                }
            }
            if parents_ok && m.likelihood.counts.shape() != want_shape.as_slice() {
                out.push(format!(
                    "{ctx}: likelihood shape {:?} != {:?}",
                    m.likelihood.counts.shape(),
                    want_shape
                ));
            }
            out.extend(m.likelihood.violations(&format!("{ctx} likelihood")));
        }
        out
    }

    /// Serialize to the canonical text format. Equal models produce
    /// byte-identical streams; floats carry 17 significant digits so the
    /// round trip is exact.
    pub fn serialize(&self) -> Result<Vec<u8>> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        let envelope = Envelope { format_version: FORMAT_VERSION, model: self.clone() };
        to_canonical_json(&envelope)
    }

    /// Parse a model from bytes produced by `serialize`.
    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let version: VersionProbe = serde_json::from_slice(bytes)
            .map_err(|e| parse_error(bytes, &e))?;
        if version.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let envelope: Envelope =
            serde_json::from_slice(bytes).map_err(|e| parse_error(bytes, &e))?;
        Ok(envelope.model)
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    model: GenerativeModel,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn parse_error(bytes: &[u8], e: &serde_json::Error) -> Error {
    // serde_json reports line/column; convert to a byte offset.
    let (line, column) = (e.line(), e.column());
    let mut offset = 0usize;
    let mut seen = 1usize;
    for (i, &b) in bytes.iter().enumerate() {
        if seen == line {
            offset = i + column.saturating_sub(1);
            break;
        }
        if b == b'\n' {
            seen += 1;
        }
    }
    Error::Parse { offset: offset.min(bytes.len()), message: e.to_string() }
}

/// Serialize with decimal floats at 17 significant digits.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFloats);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Argument(format!("serialize failed: {e}")))?;
    Ok(out)
}

struct CanonicalFloats;

impl serde_json::ser::Formatter for CanonicalFloats {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        // 17 significant digits: exact f64 round trip, diff-stable files.
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.8e}")
    }
}
