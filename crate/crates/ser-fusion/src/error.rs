//! Crate-wide error type and process exit-code mapping.

use thiserror::Error;

/// Top-level error for all pipeline operations.
#[derive(Debug, Error)]
pub enum SerError {
    /// Invalid arguments, unusable configuration.
    #[error("usage: {0}")]
    Usage(String),

    /// Malformed or unusable input data (audio, manifests, checkpoints).
    #[error("data: {0}")]
    Data(String),

    /// Shape or contract violation inside the numerics engine.
    #[error("shape: {0}")]
    Shape(String),

    /// Training diverged (NaN/inf loss) or a computation left the finite range.
    #[error("numerical: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl SerError {
    /// Exit code contract: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            SerError::Usage(_) => 1,
            SerError::Data(_) | SerError::Io(_) | SerError::Shape(_) => 2,
            SerError::Numerical(_) => 3,
        }
    }
}

impl From<serde_json::Error> for SerError {
    fn from(e: serde_json::Error) -> Self {
        SerError::Data(format!("json: {e}"))
    }
}

impl From<hound::Error> for SerError {
    fn from(e: hound::Error) -> Self {
        SerError::Data(format!("wav: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, SerError>;
