use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coefficient vector is all zero")]
    ZeroVector,
    #[error("quadratic form {value:e} is not positive")]
    NumericalDomain { value: f64 },
    #[error("collinear scale factor {0} must satisfy |lambda| > 1")]
    InvalidLambda(i64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid channel instance: {0}")]
    InvalidChannel(String),
    #[error("invalid rate requirements: {0}")]
    InvalidRequirements(String),
    #[error("invalid termination policy: {0}")]
    InvalidPolicy(String),
    #[error("expected {expected} selection entries, found {found}")]
    WrongEntryCount { expected: usize, found: usize },
    #[error("relay {0} contributes more than one coefficient vector")]
    DuplicateRelay(usize),
    #[error("network coding matrix is singular")]
    RankDeficient,
    #[error("enumeration radius yields more than {limit} candidates")]
    RadiusTooLarge { limit: usize },
    #[error("no feasible full-rank selection: {0}")]
    Infeasible(String),
    #[error("{combinations} combinations exceed the exhaustive search limit of {limit}")]
    Explosion { combinations: u128, limit: u128 },
    #[error("{players} players exceed the exhaustive core check limit of {limit}")]
    TooLarge { players: usize, limit: usize },
    #[error("coalition of one player cannot hold a positive value")]
    DegenerateCoalition,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid input at `{key}`: {message}")]
    Input { key: String, message: String },
    #[error("invalid economic parameters: {0}")]
    InvalidEcon(String),
}

pub type Result<T> = std::result::Result<T, Error>;
