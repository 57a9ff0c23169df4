use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The type is `Clone` so that shared nuisance fits can cache a failure and
/// hand it to every estimator that depends on them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{path}: missing value in data row {row} (line {line}), column `{column}`")]
    MissingValue {
        path: String,
        row: usize,
        line: usize,
        column: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate descent did not converge after {iterations} sweeps (last max change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            msg: err.to_string(),
        }
    }
}
