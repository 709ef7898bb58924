use std::path::PathBuf;

/// Command-line failures, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(llfc::Error),
    #[error("format error at byte {offset} in {path}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Format { .. } | CliError::Io(_) => 4,
        }
    }
}

impl From<llfc::Error> for CliError {
    fn from(e: llfc::Error) -> Self {
        match e {
            llfc::Error::Divergence { .. }
            | llfc::Error::Convergence { .. }
            | llfc::Error::NonFinite(_) => CliError::Numeric(e),
            llfc::Error::IdxFormat { offset, message } => CliError::Format {
                path: PathBuf::new(),
                offset,
                message,
            },
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
