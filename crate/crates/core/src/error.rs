use std::io;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data that violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),
    /// A loss, gradient or parameter became non-finite.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// The operation is not supported for this model kind or size.
    #[error("capability error: {0}")]
    Capability(String),
    /// A binary or text file is malformed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    /// Invalid configuration (bands, config files, descriptors).
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
