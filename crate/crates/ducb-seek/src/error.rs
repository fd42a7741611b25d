//! Crate-wide error type.
//!
//! Errors are grouped by how the caller is expected to react: configuration
//! errors are user-fixable and map to exit code 2, I/O errors to exit code 3,
//! everything else indicates a structural misuse or a numerical failure
//! inside a running trial.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; `key` is the dotted path of the offending entry.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// Caller violated a structural precondition (dimension mismatch,
    /// out-of-range index, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// A solve or factorization failed inside the filter.
    #[error("numerical degeneracy in {context}: {diagnostics}")]
    Numerical { context: String, diagnostics: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input data (CSV traces, JSON configs at the syntax level).
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn structural(message: impl Into<String>) -> Self {
        Error::Structural(message.into())
    }

    pub fn numerical(context: impl Into<String>, diagnostics: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            diagnostics: diagnostics.into(),
        }
    }

    /// Stable process exit code for the CLI: 0 success, 2 config, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse(_) => 2,
            Error::Io(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
