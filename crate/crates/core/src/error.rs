use std::path::PathBuf;

/// Errors produced by design, assembly, integration and the scenario layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent input (dimensions, weights, delays, schema).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The delay bound cannot be met for the given agent model, or a
    /// requested override violates a solvability bound.
    #[error("unsolvable design: {0}")]
    Unsolvable(String),

    /// A numerical routine failed (ill-conditioning, non-convergence, NaN).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {msg}")]
    Scenario { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Scenario { .. } => 2,
            Error::Unsolvable(_) => 3,
            Error::Numerical(_) => 4,
            Error::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
