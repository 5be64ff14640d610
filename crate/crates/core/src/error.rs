use std::path::PathBuf;

/// Errors raised anywhere in the filtering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("process model produced a non-finite state for member {member}")]
    Propagation { member: usize },

    #[error("observation model produced a non-finite observation for member {member}")]
    Observation { member: usize },

    #[error("integration blew up at step {step}")]
    BlowUp { step: usize },

    #[error("reverse-time solver exceeded {max_steps} steps (member {member:?}, tau = {tau})")]
    Solver {
        member: Option<usize>,
        tau: f64,
        max_steps: usize,
    },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("unsupported capability: {0}")]
    Capability(String),

    #[error("weight degeneracy: every log-weight is -inf")]
    Degeneracy,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
