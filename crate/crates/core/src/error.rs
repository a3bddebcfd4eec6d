use thiserror::Error;

/// Errors surfaced by the toolkit. Every rejected precondition carries a
/// human-readable description of what was violated.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("track rejected: {0}")]
    TrackRejected(String),
    #[error("fit rejected: {0}")]
    FitRejected(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
