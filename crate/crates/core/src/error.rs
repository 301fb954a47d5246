use thiserror::Error;

/// Errors produced by the evdkit kernels and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: matrices must have at least one row")]
    InvalidDimension(usize),

    #[error("invalid length: {0}")]
    InvalidLength(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid bandwidth {b} for n = {n}")]
    InvalidBandwidth { b: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid gemm batch descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
