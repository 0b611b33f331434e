use thiserror::Error;

/// Errors raised by the weld-quality pipeline.
#[derive(Debug, Error)]
pub enum WeldError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("malformed {what} (line {line}): {msg}")]
    Format {
        what: &'static str,
        line: usize,
        msg: String,
    },
    #[error("unsupported model file: {0}")]
    UnsupportedModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WeldError>;

pub(crate) fn invalid(msg: impl Into<String>) -> WeldError {
    WeldError::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(WeldError::DimensionMismatch { expected, actual })
    }
}
