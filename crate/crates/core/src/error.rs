use thiserror::Error;

use crate::set::SetError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("ingest error in {relation}, row {row}: {message}")]
    Ingest { relation: String, row: usize, message: String },
    #[error("catalog error: {0}")]
    Catalog(String),
    #[error("planning error: {0}")]
    Plan(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid generator spec: {0}")]
    Generator(String),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn parse(line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Parse { line, column, message: message.into() }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Whether the error stems from user input rather than an engine defect.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Internal(_) | Error::Set(_))
    }
}
