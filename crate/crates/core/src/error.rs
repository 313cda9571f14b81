use std::path::PathBuf;

use pitf_tensor::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{path}: line {line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("series {id}: {msg}")]
    Series { id: String, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite activations in layer {layer}")]
    NonFiniteLayer { layer: usize },

    #[error("non-finite forecast at step {step}")]
    NonFiniteForecast { step: usize },

    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("forecast coverage mismatch; missing ids: {0:?}")]
    Coverage(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for data problems, 3 for numeric failures,
    /// 1 for everything else (usage/configuration).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Malformed { .. }
            | Error::Series { .. }
            | Error::Data(_)
            | Error::Coverage(_)
            | Error::Io { .. }
            | Error::Checkpoint(_)
            | Error::Json(_) => 2,
            Error::NonFiniteLayer { .. }
            | Error::NonFiniteForecast { .. }
            | Error::NonFiniteLoss { .. }
            | Error::NonFiniteGradient(_) => 3,
            Error::Tensor(TensorError::NonFinite { .. }) => 3,
            Error::Tensor(TensorError::Domain { .. }) => 2,
            Error::Tensor(_) | Error::Config(_) => 1,
        }
    }
}
