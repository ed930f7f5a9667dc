use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The config could not be parsed; the message carries the location.
    #[error("{file}: {message}")]
    Parse { file: String, message: String },

    /// A value parsed but is not acceptable; `key` is its dotted path.
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },

    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error("could not serialize output: {0}")]
    Output(String),

    #[error(transparent)]
    Core(#[from] abplab::Error),
}

impl CliError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Invalid { key: key.into(), message: message.into() }
    }

    /// Bad input is 2; anything that went wrong while computing is 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Invalid { .. } => 2,
            CliError::Io { .. } | CliError::Output(_) | CliError::Core(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
