use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants to exit codes: I/O failures exit 2, everything
/// else (bad parameters, malformed files, shape mismatches) exits 1.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented range or precondition.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A file parsed but violated the format contract. Carries the
    /// 1-based line number where the violation was detected.
    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },

    /// Two inputs that must agree (ids, shapes, label order) do not.
    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
