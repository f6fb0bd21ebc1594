use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] precip_core::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("missing input: {0}")]
    Missing(String),

    #[error("alignment: {0}")]
    Alignment(String),

    #[error("gradient check failed: max relative error {max:e} >= {tolerance:e}")]
    GradCheck { max: f64, tolerance: f64 },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit status per error class.
    pub fn exit_code(&self) -> u8 {
        use precip_core::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } | CliError::Missing(_) => exit::IO,
            CliError::Alignment(_) => exit::MISMATCH,
            CliError::GradCheck { .. } => exit::CHECK_FAILED,
            CliError::Core(e) => match e {
                E::Io(_) => exit::IO,
                E::Config(_) => exit::CONFIG,
                E::Parse { .. } | E::Schema(_) | E::Validation { .. } | E::Format(_) | E::Json(_) | E::Grid(_) => {
                    exit::DATA
                }
                E::Training { .. } | E::Numeric { .. } | E::Cache(_) | E::Estimation(_) | E::Fit(_) | E::IndexBuild(_) => {
                    exit::MODEL
                }
                E::Routing(_) | E::Shape(_) | E::Query(_) => exit::MISMATCH,
            },
        }
    }
}

/// Exit statuses. Usage errors exit with 2 from the argument parser.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CONFIG: u8 = 3;
    pub const IO: u8 = 4;
    pub const DATA: u8 = 5;
    pub const MODEL: u8 = 6;
    pub const MISMATCH: u8 = 7;
    pub const CHECK_FAILED: u8 = 8;
}
