use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("non-positive rate {value} on path {path} at t={time}")]
    NonPositiveRate { path: usize, time: usize, value: f64 },

    #[error("non-finite state {value} on path {path} at t={time}")]
    NonFiniteState { path: usize, time: usize, value: f64 },

    #[error("shape mismatch for {what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("terminal hedge position must be zero, path {path} holds {value}")]
    NonZeroTerminalPosition { path: usize, value: f64 },

    #[error("cross-sectional statistics need at least 2 paths, got {n_paths}")]
    TooFewPaths { n_paths: usize },

    #[error("regularized normal equations are singular at t={t}")]
    SingularSystem { t: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("all {count} runs failed; first failure: {first}")]
    AllRunsFailed { count: usize, first: String },

    #[error("run {run} (seed {seed}): {source}")]
    Run {
        run: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than by the model
    /// misbehaving on valid inputs.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidParameter { .. } | Error::Parse(_) => true,
            Error::Run { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
