//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the documented domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not defined for the given variant (e.g. sampling
    /// from an empirical smoothing spec with no registered sampler).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A malformed input file. `row` is 1-based and counts data rows.
    #[error("parse error at data row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// An enumeration problem too large for exact computation.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// A well-formedness or audit check failed.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
