use thiserror::Error;

/// Errors raised by the kernel, regression and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("invalid moments: {0}")]
    InvalidMoments(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("matrix not positive definite even with jitter {jitter:e}; min eigenvalue estimate {min_eigenvalue:e}")]
    NotPositiveDefinite { jitter: f64, min_eigenvalue: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("model integrity check failed: {0}")]
    Integrity(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
