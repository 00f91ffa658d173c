use std::path::Path;

use roage_core::Error as CoreError;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    pub fn missing(path: &Path, step: &str) -> Self {
        CliError::Data(format!("missing {}: run `roage {step}` first", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let message = e.to_string();
        match e.root() {
            CoreError::Numerical(_)
            | CoreError::DegenerateFeatures(_)
            | CoreError::DegenerateGeometry(_)
            | CoreError::MapeUndefinedAtZero { .. } => CliError::Numerical(message),
            _ => CliError::Data(message),
        }
    }
}
