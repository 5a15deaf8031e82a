//! Crate-wide error type.

/// Errors produced by dataset handling, generation, model fitting, and
/// evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent. The message
    /// names the offending field.
    #[error("config error: {0}")]
    Config(String),

    /// Input data violates a structural requirement.
    #[error("data error: {0}")]
    Data(String),

    /// Too few rows to fit or score a model.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A row or table does not match the expected feature schema.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A service name is missing from the catalog in use.
    #[error("unknown service: {0}")]
    UnknownService(String),

    /// A file could not be parsed. Carries the path and 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;
