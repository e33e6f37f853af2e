//! Error types shared across the engine.

use thiserror::Error;

/// Errors raised by tensor arithmetic, inference, planning, learning and
/// structure operations.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument was structurally invalid (empty list, NaN input, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A tensor column or total sums to zero where positive mass is required.
    #[error("degenerate tensor: {0}")]
    DegenerateTensor(String),

    /// A special function was evaluated outside its domain.
    #[error("numeric domain: {0}")]
    NumericDomain(String),

    /// Model validation failed; the payload lists each violation.
    #[error("invalid model: {0:?}")]
    InvalidModel(Vec<String>),

    /// Serialized model could not be parsed.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Serialized model carries an unsupported format version.
    #[error("version mismatch: found {found}, supported {supported}")]
    Version { found: u32, supported: u32 },

    /// A planning tree would exceed the evaluation budget.
    #[error("planning budget exceeded: {leaves} leaves > {budget}")]
    Budget { leaves: u64, budget: u64 },

    /// An operation required smoothed beliefs but was handed filtered ones.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A model reduction would leave a nonpositive Dirichlet count.
    #[error("infeasible reduction: {0}")]
    InfeasibleReduction(String),

    /// Embedding requested on fewer than two states.
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
}

pub type Result<T> = std::result::Result<T, Error>;
