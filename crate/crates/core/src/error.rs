use std::path::PathBuf;

use smis_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmisError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error in {path}: {reason}")]
    Data { path: PathBuf, reason: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SmisError {
    pub fn config(msg: impl Into<String>) -> Self {
        SmisError::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        SmisError::Invalid(msg.into())
    }

    pub fn data(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        SmisError::Data {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SmisError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category for CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            SmisError::Tensor(TensorError::Shape { .. }) => "shape",
            SmisError::Tensor(TensorError::Config { .. }) | SmisError::Config(_) => "config",
            SmisError::Tensor(TensorError::Checkpoint(_)) => "checkpoint",
            SmisError::Tensor(_) => "tensor",
            SmisError::Data { .. } => "data",
            SmisError::Invalid(_) => "invalid",
            SmisError::NonFinite { .. } => "non_finite",
            SmisError::Io { .. } | SmisError::Image { .. } => "io",
            SmisError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, SmisError>;
