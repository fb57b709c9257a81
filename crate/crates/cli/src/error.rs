use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("missing input: {}", .0.display())]
    Missing(PathBuf),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 0 success, 1 config error, 2 missing input, 3 runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Missing(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<lipmap_core::Error> for CliError {
    fn from(e: lipmap_core::Error) -> Self {
        match e {
            lipmap_core::Error::Io { path, source }
                if source.kind() == std::io::ErrorKind::NotFound =>
            {
                CliError::Missing(path)
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}
