use std::path::PathBuf;

/// Process exit status of every CLI command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Config = 1,
    Data = 2,
    Divergence = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Incompatible(String),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error(transparent)]
    Core(#[from] nlstm_core::Error),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            AppError::Usage(_) | AppError::Config(_) => ExitCode::Config,
            AppError::Divergence { .. } => ExitCode::Divergence,
            AppError::Core(nlstm_core::Error::Config(_)) => ExitCode::Config,
            AppError::Data(_) | AppError::Io { .. } | AppError::Incompatible(_) | AppError::Core(_) => {
                ExitCode::Data
            }
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
