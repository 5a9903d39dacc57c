//! Error type shared by the evaluation metrics and baselines.

use fad_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid argument: {0}")]
    Invalid(String),
    /// A signal with no variance; callers may treat this as "metric
    /// undefined" rather than a hard failure.
    #[error("degenerate signal: {0}")]
    Degenerate(String),
}

impl EvalError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        EvalError::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;
