//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by dataset handling, correctors, metrics, and the
/// command-line pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed row in a CSV dataset. `line` is 1-based and counts the
    /// header.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// A dataset key (date/grid-point or issuance/lead/member) appeared twice.
    #[error("{path}:{line}: duplicate key {key}")]
    DuplicateKey {
        path: PathBuf,
        line: u64,
        key: String,
    },

    /// A precondition on operation arguments was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A training window or index selected no usable dates.
    #[error("empty training window: {0}")]
    EmptyWindow(String),

    /// Required forecast or observation entries are absent.
    #[error("missing data: {0}")]
    MissingData(String),

    /// Array/grid dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid run configuration or command usage.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Process exit code the CLI maps this error to: 2 for usage/config
    /// problems, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
