use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Process exit codes. Usage errors detected by the argument parser also exit
/// with [`EXIT_USAGE`].
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_COMPUTE: i32 = 5;

pub const EXIT_CODES_HELP: &str = "\
Exit codes:
  0  success
  2  usage error, invalid parameter, or config schema violation
  3  file I/O failure or malformed input file (NPY, PNG, metadata)
  4  solver divergence (non-finite iterate)
  5  other numerical failure (broken antisymmetry, failed pupil learning)

Environment:
  QDPC_OUT_DIR  base output directory; overrides the config file, loses to --out-dir";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {msg}")]
    Config { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    BadInput { path: PathBuf, msg: String },

    /// A solver returned a non-finite phase.
    #[error("{method} diverged: {msg}")]
    Diverged { method: String, msg: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Core(#[from] qdpc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use qdpc::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } => EXIT_USAGE,
            CliError::Io { .. } | CliError::BadInput { .. } | CliError::Csv(_) => EXIT_IO,
            CliError::Diverged { .. } => EXIT_DIVERGED,
            CliError::Core(e) => match e {
                E::InvalidGrid(_) | E::InvalidParameter(_) | E::Aliasing(_) => EXIT_USAGE,
                E::Io(_) | E::Npy(_) | E::Png(_) | E::GridMismatch(_) | E::NonFinite { .. } => EXIT_IO,
                E::Divergence { .. } => EXIT_DIVERGED,
                E::NonPositiveSum { .. } | E::Antisymmetry(_) | E::Learning(_) => EXIT_COMPUTE,
            },
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
