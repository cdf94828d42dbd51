use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the file formats and the command line.
#[derive(Debug, Error)]
pub enum NmtxError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}: not an nmtx model file")]
    BadMagic { path: PathBuf },

    #[error("{path}: format version {found}, this build reads version {expected}")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: file is truncated ({what})")]
    Truncated { path: PathBuf, what: String },

    #[error("{path}: checksum mismatch in `{entry}`")]
    Checksum { path: PathBuf, entry: String },

    #[error("{path}: missing parameter block `{block}`")]
    MissingBlock { path: PathBuf, block: String },

    #[error("{path}: malformed entry `{entry}`: {message}")]
    Malformed { path: PathBuf, entry: String, message: String },

    /// A bad key or value in a run-configuration file.
    #[error("{path}:{line}: {message}")]
    Config { path: PathBuf, line: usize, message: String },

    /// Bad flags or flag values.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] nmtx_core::Error),
}

pub type Result<T, E = NmtxError> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERIC: i32 = 3;
}

impl NmtxError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NmtxError::Io {
            path: path.into(),
            source,
        }
    }

    /// The exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        use nmtx_core::Error as E;
        match self {
            NmtxError::Usage(_) | NmtxError::Config { .. } => exit::USAGE,
            NmtxError::Core(E::NonFiniteLoss { .. }) => exit::NUMERIC,
            NmtxError::Core(E::InvalidConfig(_) | E::UnknownBlock(_) | E::InvalidProbability { .. }) => exit::USAGE,
            _ => exit::DATA,
        }
    }
}
