use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] bconcord::Error),
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    /// 1 for user errors, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Internal(_) => 2,
            _ => 1,
        }
    }
}
