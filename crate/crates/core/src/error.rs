use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An enumeration would exceed the configured size bound.
    #[error("{what}: {required} exceeds the configured limit of {limit}")]
    GuardExceeded {
        what: &'static str,
        required: f64,
        limit: f64,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid checkpoints: {0}")]
    InvalidCheckpoints(String),

    /// A history-dependent policy was queried on a history it has no entry for.
    #[error("history-dependent policy has no entry for history {0}")]
    MissingHistory(String),

    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("distribution scopes differ: {0}")]
    ScopeMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Every model in the class assigns zero likelihood to the data.
    #[error("model class is misspecified: every model has zero likelihood on the dataset")]
    Misspecified,

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn guard(what: &'static str, required: f64, limit: f64) -> Self {
        Error::GuardExceeded { what, required, limit }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
