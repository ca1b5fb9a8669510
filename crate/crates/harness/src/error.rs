use std::path::{Path, PathBuf};

use spot_core::SpotError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Bad settings, arguments or input files.
    #[error("{0}")]
    Invalid(String),
    /// Writing results failed.
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// Some runs of a sweep failed; the rest were written.
    #[error("{failed} of {total} runs failed")]
    RunsFailed { failed: usize, total: usize },
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Invalid(_) => 2,
            HarnessError::Io { .. } => 3,
            HarnessError::RunsFailed { .. } => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> HarnessError {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<SpotError> for HarnessError {
    fn from(e: SpotError) -> Self {
        HarnessError::Invalid(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Invalid(msg.into())
}
