use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("text needs {needed} pixels but the frame is {available} wide: {text:?}")]
    TextOverflow {
        text: String,
        needed: usize,
        available: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("target tensor contains a value other than 0 or 1: {0}")]
    NonBinaryTarget(f32),

    #[error("hypothesis count {hypotheses} does not match reference count {references}")]
    LengthMismatch { hypotheses: usize, references: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("checkpoint declares {expected} tensors but only {found} could be read")]
    TensorCountMismatch { expected: usize, found: usize },

    #[error("non-finite loss {loss} at step {step}")]
    NonFinite { step: usize, loss: f32 },

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
