use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("corpus is rank deficient: requested components up to {requested}, achievable rank {achievable}")]
    RankDeficient { requested: usize, achievable: usize },

    #[error(
        "no BCH code of length {n} corrects {requested} errors with k >= {min_k}; max feasible correction is {max_feasible}"
    )]
    CapacityInfeasible {
        n: usize,
        requested: usize,
        min_k: usize,
        max_feasible: usize,
    },

    #[error("need {needed} shares to reconstruct, got {got}")]
    ReconstructionRefused { needed: usize, got: usize },

    #[error("record integrity: {0}")]
    Integrity(String),

    #[error("undefined angle: zero vector")]
    UndefinedAngle,

    #[error("F1 is undefined: {0}")]
    UndefinedF1(String),

    #[error("malformed embedding file: {0}")]
    MalformedFile(String),

    #[error("missing key: {0}")]
    MissingKey(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
