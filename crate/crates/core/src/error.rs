use thiserror::Error;

/// Errors produced by analysis operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate ground truth: only one class present")]
    DegenerateGroundTruth,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("universe mismatch: {0} vs {1}")]
    UniverseMismatch(usize, usize),
    #[error("need at least {required} instances, got {actual}")]
    TooFewInstances { required: usize, actual: usize },
    #[error("unknown attack: {0}")]
    UnknownAttack(String),
    #[error("insufficient instances for attack '{attack}': need {required}, have {actual}")]
    InsufficientInstances {
        attack: String,
        required: usize,
        actual: usize,
    },
    #[error("missing signal: {0}")]
    MissingSignal(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("power iteration failed to converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("degenerate sample: zero spread")]
    DegenerateSample,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("sample index {index} out of range for universe of size {universe}")]
    IndexOutOfRange { index: usize, universe: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
