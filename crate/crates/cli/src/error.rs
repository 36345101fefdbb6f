use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] twotemp::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serialize(String),

    #[error("{failed} acceptance check(s) failed")]
    Acceptance { failed: usize },
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}

impl CliError {
    /// 2 bad input, 3 numerical or i/o failure, 4 failed acceptance check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(e) if e.is_validation() => 2,
            CliError::Model(_) | CliError::Io(_) | CliError::Serialize(_) => 3,
            CliError::Acceptance { .. } => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
