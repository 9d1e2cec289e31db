use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    #[error("config error: {0}")]
    Config(String),
    /// A checked invariant failed (exit 1).
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] entsamp_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}
