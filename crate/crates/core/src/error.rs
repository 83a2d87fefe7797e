//! Error taxonomy shared by every module. Variants are grouped by how the
//! CLI maps them to process exit codes: configuration problems, numerical or
//! contract failures at runtime, and I/O (ingest, checkpoint, filesystem).

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (bad ratios, sizes that do not
    /// divide, unknown keys, toggle combinations that make no sense).
    #[error("config error: {0}")]
    Config(String),

    /// A caller violated an operation's precondition (shape mismatch,
    /// structurally different parameter collections, index out of range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values were produced where finite ones are required.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A dataset source could not be read or understood.
    #[error("ingest error at {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    /// A checkpoint directory is missing pieces, corrupt, or from an
    /// incompatible format version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class: 2 configuration, 3 runtime/numerical,
    /// 4 I/O (ingest, checkpoint, filesystem). Usage errors exit 1 and are
    /// produced by the argument parser, not this type.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Contract(_) | Error::Numerical(_) => 3,
            Error::Ingest { .. } | Error::Checkpoint(_) | Error::Io(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }

    pub fn ingest(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Ingest { path: path.into(), reason: reason.into() }
    }
}
