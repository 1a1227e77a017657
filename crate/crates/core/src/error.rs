use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain `{0}` not found or empty")]
    EmptyDomain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::UnknownLabel(_) => "unknown-label",
            Error::InvalidInput(_) => "invalid-input",
            Error::EmptyDomain(_) => "empty-domain",
            Error::Numerical(_) => "numerical",
            Error::Protocol(_) => "protocol",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
