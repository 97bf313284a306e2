use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty conditioning event: the tail beyond the threshold has zero mass")]
    EmptyConditioningEvent,

    #[error("empty truncation interval ({lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("no feasible lattice point within the search bound {bound}")]
    Infeasible { bound: u32 },

    #[error("non-unique minimizer: {0:?} and {1:?} attain the same rate")]
    NonUniqueMinimizer(Vec<u32>, Vec<u32>),

    #[error("degenerate auxiliary set: conditional count mass underflowed")]
    DegenerateAuxiliarySet,

    #[error("auxiliary set has zero probability")]
    ZeroAuxiliaryProbability,

    #[error("fixed-point iteration did not converge within {0} steps")]
    NonConvergent(usize),

    #[error("boundary-degenerate level: some station subset drains the target at exactly a = {0}")]
    BoundaryDegenerateLevel(f64),

    #[error("gamma thresholds are not admissible for this event")]
    InadmissibleGamma,
}
