use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("population size {n} leaves type {empty_type} empty (k = {k})")]
    PopulationTooSmall { n: u64, k: usize, empty_type: usize },

    #[error("regime classification failed: {0}")]
    Regime(String),

    #[error("not supercritical: {0}")]
    Subcritical(String),

    #[error("matrix is reducible; strongly connected blocks {blocks:?}")]
    Reducible { blocks: Vec<Vec<usize>> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("population size {n} exceeds the exact-model cap {cap}; use Model 3 instead")]
    ExactModelCap { n: u64, cap: u64 },

    #[error("no outbreak reached the threshold {threshold} after {discarded} discarded runs")]
    ConditioningFailed { discarded: u64, threshold: u64 },

    #[error("pin level {level} is never reached")]
    PinNotReached { level: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("run {run} at n = {n}: {source}")]
    Run {
        n: u64,
        run: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Strips run context, returning the innermost error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Run { source, .. } => source.root(),
            other => other,
        }
    }
}
