use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed cell or header in a CSV file. `line` is 1-based and counts the header.
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel not PSD at jitter {jitter:.0e}")]
    NotPsd { jitter: f64 },

    #[error("rank exhausted at component {0}")]
    RankExhausted(usize),

    #[error("training diverged (last finite epoch: {last_finite_epoch})")]
    Diverged { last_finite_epoch: usize },

    #[error("undefined R² for zero-variance target")]
    ZeroVarianceTarget,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
