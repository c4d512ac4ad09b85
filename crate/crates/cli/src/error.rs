use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] geqhom_core::Error),

    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("acceptance failed: {0}")]
    Acceptance(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 for a red
    /// acceptance criterion.
    pub fn exit_code(&self) -> i32 {
        use geqhom_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(
                E::InvalidSpec(_) | E::InvalidArgument(_) | E::NonUnitDirection(_) | E::CflViolation(_) | E::GridTooSmall(_),
            ) => 2,
            CliError::Core(_) => 3,
            CliError::Io { .. } => 3,
            CliError::Acceptance(_) => 1,
        }
    }
}
