use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no ground truth instances")]
    NoGroundTruth,
    #[error("empty instance sets")]
    EmptyInstances,
    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
