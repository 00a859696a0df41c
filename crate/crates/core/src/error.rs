//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SedError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {context} (layer {layer})")]
    NonFinite { context: String, layer: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("wav error at {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("bad file format for {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("training aborted at step {step}: {message}")]
    TrainingAborted { step: u64, message: String },

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SedError>;

impl SedError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SedError::Io {
            path: path.into(),
            source,
        }
    }
}
