//! Error taxonomy shared by the whole crate.
//!
//! The variants deliberately mirror how failures are reported at the CLI
//! boundary: configuration problems (exit code 1), data loading/validation
//! problems (exit code 2), and everything that goes wrong while computing
//! (exit code 3).

use std::io;
use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A run configuration is malformed or internally inconsistent
    /// (bad hyperparameter ranges, unknown variants, bad CLI overrides).
    #[error("config error: {0}")]
    Config(String),

    /// An on-disk artifact (bundle, checkpoint, config file) is missing,
    /// unreadable, or fails validation.
    #[error("data error: {0}")]
    Data(String),

    /// Tensor dimensions do not line up for a requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// An input violates a structural precondition (asymmetric adjacency,
    /// non-binary edge values, empty masks, degenerate diagnostics inputs).
    #[error("validation error: {0}")]
    Invalid(String),

    /// An underlying I/O operation failed; the path is kept for context.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    /// Convenience constructor that attaches a path to an [`io::Error`].
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the CLI for this kind of failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Io { .. } => 2,
            Error::Shape(_) | Error::Invalid(_) => 3,
        }
    }
}
