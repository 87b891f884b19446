use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A file or JSON document did not match its documented layout.
    #[error("format error in `{field}`: {detail}")]
    Format { field: String, detail: String },

    /// Caller broke a precondition of an operation (shape mismatch, even `n`, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A pipeline was asked to run on inputs it cannot use.
    #[error("configuration error: {0}")]
    Config(String),

    /// Scene generation constraints cannot be satisfied.
    #[error("invalid scene spec: {0}")]
    Spec(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
