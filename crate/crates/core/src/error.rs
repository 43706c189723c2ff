use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("covariance is not positive semi-definite (Cholesky failed after jitter)")]
    CholeskyFailure,

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid feature vector: {0}")]
    InvalidFeature(String),

    #[error("feature sidecar references frame {frame} detection {index}, which does not exist")]
    MissingDetection { frame: u32, index: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: unknown key `{key}`")]
    UnknownKey { path: PathBuf, key: String },

    #[error("{path}: key `{key}` expects {expected}")]
    TypeError {
        path: PathBuf,
        key: String,
        expected: &'static str,
    },

    #[error("{path}: key `{key}` out of range: {msg}")]
    RangeViolation {
        path: PathBuf,
        key: String,
        msg: String,
    },

    #[error("frame timestamp {got} does not advance past {last}")]
    OutOfOrderFrame { last: f64, got: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("tracker outputs carry no confidence scores; score sweep impossible")]
    MissingScores,

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

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
}
