use std::io;

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] sdl_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("reference check failed: {0}")]
    Reference(String),
}

impl RunError {
    /// 1 for bad configuration, 2 for anything that failed while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Core(_) | Self::Io(_) | Self::Reference(_) => 2,
        }
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;
