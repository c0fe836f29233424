use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by model construction, fitting, the pipelines and file I/O.
#[derive(Debug, Error)]
pub enum SmoeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file did not match the expected image or config layout. `field`
    /// names the part of the input that was rejected.
    #[error("format error in {field}: {message}")]
    Format {
        field: &'static str,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl SmoeError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SmoeError::InvalidArgument(msg.into())
    }

    pub(crate) fn format(field: &'static str, msg: impl Into<String>) -> Self {
        SmoeError::Format {
            field,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SmoeError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SmoeError>;
