use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("weights do not form a probability vector: {0}")]
    InvalidProbability(String),

    #[error("kernel row {row} is not a probability vector: {reason}")]
    InvalidKernel { row: usize, reason: String },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("potential must be positive (index {index}, value {value})")]
    NonPositivePotential { index: usize, value: f64 },

    #[error("epsilon {epsilon} times potential {potential} exceeds 1 at generation {generation}")]
    EpsilonTooLarge {
        generation: usize,
        epsilon: f64,
        potential: f64,
    },

    #[error("generation {generation} out of range (model defines 0..={max})")]
    GenerationOutOfRange { generation: usize, max: usize },

    #[error("state space has {states} states, limit is {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },

    #[error("no closed-form oracle: {0}")]
    NoOracle(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate rate: zero deviation and zero variance term")]
    DegenerateRate,

    #[error("constant C' required for Gaussian remainder bound")]
    ConstantRequired,

    #[error("observable has no closed-form kernel integral: {0}")]
    UnsupportedObservable(String),

    #[error("exact mode limited to {limit} states; use bound mode")]
    UseBoundMode { limit: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("write failed: {0}")]
    Io(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
