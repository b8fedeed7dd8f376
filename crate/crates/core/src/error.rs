use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid {what}: {msg}")]
    InvalidSpec { what: &'static str, msg: String },

    #[error("panel too short: need at least {required} time steps, got {actual}")]
    InsufficientLength { required: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("ensemble mismatch: {0}")]
    Ensemble(String),

    #[error("{what} is not positive definite (smallest shifted pivot {pivot:e})")]
    NotPositiveDefinite { what: &'static str, pivot: f64 },

    #[error(
        "boosting produced no positive update factor (sum of beta = {beta_sum}); \
         every round had weighted error >= 0.5, try a smaller horizon or more past days"
    )]
    NoPositiveUpdate { beta_sum: f64 },

    #[error("model format: {0}")]
    Format(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input or I/O).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::NoPositiveUpdate { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn spec(what: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidSpec {
            what,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
