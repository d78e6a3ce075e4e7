use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] lindblad_riemann::Error),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad archive {path}: {reason}")]
    Archive { path: PathBuf, reason: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for numerical failures, 4 for IO.
    pub fn exit_code(&self) -> i32 {
        use lindblad_riemann::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::Shape(_) | E::InvalidArgument(_) | E::MemoryCap { .. } | E::HessianCap { .. } => 2,
                _ => 3,
            },
            CliError::Io { .. } | CliError::Archive { .. } => 4,
        }
    }
}
