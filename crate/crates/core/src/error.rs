use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while explaining or evaluating a model.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data that violates an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    /// A configuration value (layer id, method name, model spec) is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// A computation produced NaN/inf or the model failed a quality gate.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format { path: path.into(), message: message.to_string() }
    }

    /// Process exit code for the command-line tool: 2 for user/input
    /// problems, 3 for numeric or model failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Config(_) | Error::Io { .. } | Error::Format { .. } => 2,
            Error::Numeric(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
