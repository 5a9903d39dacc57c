//! Error type shared across the model crate.

use fad_core::CoreError;
use thiserror::Error;

/// Errors from encoders, the denoiser, the diffusion engine, and training.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("unsupported checkpoint version: found {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
}

impl ModelError {
    pub fn config(msg: impl Into<String>) -> Self {
        ModelError::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        ModelError::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
