use thiserror::Error;

/// Failure modes shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid coefficient field: {0}")]
    InvalidField(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numeric failure: {message} (relative residual {residual:e})")]
    NumericFailure { message: String, residual: f64 },
    #[error("resource limit exceeded: {what} needs {needed}, budget is {budget}")]
    ResourceLimit {
        what: String,
        needed: usize,
        budget: usize,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
