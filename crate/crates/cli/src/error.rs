use std::io;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] bwe_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bwe_core::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) | CliError::Format(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) => 1,
                E::NonFinite(_) => 3,
                _ => 2,
            },
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
