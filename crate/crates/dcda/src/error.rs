//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Rejected parameters or incompatible component combinations.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An iterative routine failed to converge or produced garbage.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The simulated run produced non-finite state.
    #[error("divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file (dataset or trace import).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
