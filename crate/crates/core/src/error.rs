use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the lattice, transceiver and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerically singular system: {0}")]
    Singular(String),

    #[error(
        "ML search space of {candidates} candidates exceeds the limit of {limit}; reduce K or M"
    )]
    Capacity { candidates: u128, limit: u128 },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
