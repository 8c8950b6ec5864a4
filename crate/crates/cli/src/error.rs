use std::fmt;

use vasamp_core::VasError;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Divergence(String),
    MissingArtifact(String),
    Verification(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::MissingArtifact(_) => 4,
            CliError::Verification(_) => 5,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (label, msg) = match self {
            CliError::Config(m) => ("config error", m),
            CliError::Divergence(m) => ("divergence", m),
            CliError::MissingArtifact(m) => ("missing artifact", m),
            CliError::Verification(m) => ("verification failed", m),
            CliError::Runtime(m) => ("error", m),
        };
        write!(f, "{label}: {msg}")
    }
}

impl From<VasError> for CliError {
    fn from(e: VasError) -> Self {
        match e {
            VasError::Divergence(_) | VasError::NonFiniteGradient(_) => {
                CliError::Divergence(e.to_string())
            }
            VasError::InvalidVocab(_)
            | VasError::InvalidParam(_)
            | VasError::MissingField(_)
            | VasError::BetaUnderflow(_)
            | VasError::InvalidToken { .. } => CliError::Config(e.to_string()),
            VasError::Checkpoint(_) => CliError::MissingArtifact(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::MissingArtifact(format!("{}: not found", path.display()))
    } else {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}
