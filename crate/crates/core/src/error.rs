use thiserror::Error;

/// Errors raised anywhere in the workbench.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum VasError {
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("token {token} out of range for vocabulary of size {size}")]
    InvalidToken { token: usize, size: usize },
    #[error("state is already terminal")]
    TerminalState,
    #[error("state is not terminal")]
    NonTerminal,
    #[error("context has zero probability mass (unseen with alpha = 0)")]
    ZeroMass,
    #[error("state space exceeds node cap of {cap}")]
    StateSpaceTooLarge { cap: usize },
    #[error("beta {0} is below the soft-value threshold; use the hard value instead")]
    BetaUnderflow(f64),
    #[error("support violation: p assigns mass where q is zero at state {state}")]
    SupportViolation { state: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged: running mse {0} exceeds limit")]
    Divergence(f64),
    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),
    #[error("exact bootstrapping requires the full next-token distribution")]
    ModeUnavailable,
    #[error("composition requires at least one weighted estimator")]
    EmptyComposition,
    #[error("provider returned no candidates")]
    EmptyCandidate,
    #[error("classifier output {0} outside [0, 1]")]
    ClassifierRange(f64),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unknown state {0}")]
    UnknownState(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, VasError>;
