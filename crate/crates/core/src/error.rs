use crate::solver::RunTrace;

/// Errors produced by the library and surfaced by the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range (have {len})")]
    Index { index: usize, len: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The outer loop hit a non-finite objective. The trace up to the failing
    /// iteration is kept so callers can flush it.
    #[error("numerical abort at iteration {iteration}: {reason}")]
    Aborted {
        iteration: usize,
        reason: String,
        trace: Box<RunTrace>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
