use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// The CLI maps each variant onto a process exit code via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix is numerically singular: min singular value {min_singular:e} <= tolerance {tolerance:e}{hint}")]
    Singular {
        min_singular: f64,
        tolerance: f64,
        hint: String,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn singular(min_singular: f64, tolerance: f64) -> Self {
        Error::Singular {
            min_singular,
            tolerance,
            hint: String::new(),
        }
    }

    /// Attach a remediation hint to a singularity error; other variants pass through.
    pub fn with_hint(self, hint: &str) -> Self {
        match self {
            Error::Singular {
                min_singular,
                tolerance,
                ..
            } => Error::Singular {
                min_singular,
                tolerance,
                hint: format!(" ({hint})"),
            },
            other => other,
        }
    }

    /// 0 success, 1 usage/config, 2 numeric/singularity, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Format { .. } => 1,
            Error::Singular { .. } | Error::Numeric(_) => 2,
            Error::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
