//! Error type for synthetic-data generation and dataset I/O.

use fad_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("dataset error: {0}")]
    Dataset(String),
}

impl DataError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        DataError::Invalid(msg.into())
    }

    pub fn dataset(msg: impl Into<String>) -> Self {
        DataError::Dataset(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
