use std::path::PathBuf;

use brg_core::BrgError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown experiment `{0}` (expected E1..E10 or `all`)")]
    UnknownExperiment(String),

    #[error("cannot read config {path}: {source}")]
    ConfigRead { path: PathBuf, source: std::io::Error },

    #[error("malformed config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error("output directory {path} is not writable: {source}")]
    OutputDir { path: PathBuf, source: std::io::Error },

    #[error("failed to write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] BrgError),
}

impl HarnessError {
    /// Process exit status for this error class. Status 2 is left to
    /// command-line usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::UnknownExperiment(_) => 3,
            HarnessError::ConfigRead { .. } | HarnessError::ConfigParse { .. } => 4,
            HarnessError::Invalid(_) => 5,
            HarnessError::OutputDir { .. } | HarnessError::Write { .. } => 6,
            HarnessError::Csv(_) | HarnessError::Json(_) | HarnessError::Core(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
