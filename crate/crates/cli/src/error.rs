use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_STATISTICAL: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Shown under `--help`.
pub const EXIT_CODE_HELP: &str = "\
Exit codes:
  0  success
  2  invalid arguments or configuration
  3  unusable input data (parse error, empty file, non-finite or too few values)
  4  statistical failure (no bandwidth satisfies the hypothesis, degenerate fit)
  5  could not read input or write output";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("{0}: no data rows")]
    EmptyData(PathBuf),

    #[error("{path}:{line}: non-finite value")]
    NonFiniteValue { path: PathBuf, line: u64 },

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] frcb_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use frcb_core::Error as E;
        match self {
            CliError::Parse { .. } | CliError::EmptyData(_) | CliError::NonFiniteValue { .. } => EXIT_DATA,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                E::EmptySample
                | E::TooFewObservations { .. }
                | E::LengthMismatch { .. }
                | E::NonFiniteValue { .. }
                | E::MissingResponse
                | E::UnexpectedResponse => EXIT_DATA,
                E::NoSatisfyingBandwidth { .. } | E::DegenerateFit { .. } => EXIT_STATISTICAL,
                _ => EXIT_USAGE,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
