//! Shared error type for the library.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input files (CSV, PGM, model binaries).
    #[error("format error: {0}")]
    Format(String),

    /// Invalid arguments or configuration.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Non-finite value in data, identified by row and column.
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    /// Numerical failure during estimation or sampling.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
