//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file could not be parsed; carries the offending line number.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Dataset-level inconsistency (misaligned files, dimension mismatch, ...).
    #[error("{0}")]
    Data(String),

    /// Caller supplied an out-of-range hyperparameter or flag value.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Model file is unreadable, corrupt, or of an unknown version.
    #[error("model file error: {0}")]
    Model(String),

    /// Non-finite values surfaced inside the solver.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Parse error with file/line context.
    pub fn parse(path: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
