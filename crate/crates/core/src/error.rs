use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The request lies outside the documented computational envelope.
    #[error("resource bound exceeded: {0}")]
    ResourceBound(String),

    /// The operation does not fit the current state, e.g. deciding on a
    /// closed session.
    #[error("conflict: {0}")]
    Conflict(String),

    #[error("undefined fit: {0}")]
    UndefinedFit(String),

    /// A numerical routine gave up (step underflow, divergent integral, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
