use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("distribution is not normalizable: {0}")]
    NotNormalizable(String),

    #[error("quadrature did not converge on [{lo}, {hi}] (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        lo: f64,
        hi: f64,
        estimate: f64,
        error: f64,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid input data: {0}")]
    Data(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("bootstrap failed: {failed} of {total} replicates did not produce a fit")]
    Bootstrap { failed: usize, total: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by malformed or unreadable input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::Json(_) | Error::Data(_)
        )
    }
}
