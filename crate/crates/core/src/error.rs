use thiserror::Error;

/// Errors raised by the numerical core and the bandit runners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("singular matrix: zero eigenvalue with no clamp")]
    SingularMatrix,
    #[error("zero vector passed to cosine kernel")]
    ZeroVector,
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("Gram matrix is not normalized (diagonal entry {index} = {value})")]
    NotNormalized { index: usize, value: f64 },
    #[error("arm {0} has no samples; warm start missing")]
    MissingWarmStart(usize),
    #[error("reference covariance is not positive definite (min eigenvalue {0:e})")]
    DegenerateReference(f64),
    #[error("inconsistent pooled state: {0}")]
    InconsistentState(String),
    #[error("brute-force grid supports at most 4 arms, got {0}")]
    TooManyArms(usize),
    #[error("sample pool of arm {arm} exhausted at round {round}")]
    PoolExhausted { arm: usize, round: usize },
    #[error("objective not supported by this algorithm: {0}")]
    UnsupportedObjective(String),
    #[error("confidence level must lie in (0,1), got {0}")]
    InvalidConfidence(f64),
    #[error("warm start too small: radius {eta} exceeds nu0/4 = {limit}")]
    WarmStartTooSmall { eta: f64, limit: f64 },
    #[error("argument out of domain: {0}")]
    OutOfDomain(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
