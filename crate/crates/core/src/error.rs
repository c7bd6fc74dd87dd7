use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = KanError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KanError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("backward called on an empty tape")]
    EmptyTape,

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Divergence {
        epoch: usize,
        step: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KanError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        KanError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        KanError::InvalidArgument(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        KanError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        KanError::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            KanError::Config { .. } | KanError::InvalidArgument(_) => 1,
            KanError::Data { .. } | KanError::Io(_) | KanError::Checkpoint(_) => 2,
            KanError::Divergence { .. } | KanError::NonFinite { .. } => 3,
            KanError::Shape { .. } | KanError::NonScalarLoss(_) | KanError::EmptyTape => 1,
        }
    }
}
