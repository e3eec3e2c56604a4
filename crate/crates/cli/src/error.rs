use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent input files or flags.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] pmfs_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(pmfs_core::Error::Config(_) | pmfs_core::Error::ConfigAt { .. }) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
