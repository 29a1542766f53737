use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the models, the optimizer and the command-line harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation was evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter violates one of its invariants.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    /// The scenario file could not be parsed.
    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// A state component became NaN or infinite during a run.
    #[error("non-finite state component `{component}` at t = {time}")]
    NonFinite { component: &'static str, time: f64 },

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("evaluation at share fraction {delta} failed: {source}")]
    Sweep {
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
