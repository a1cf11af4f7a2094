use crate::emv::SolverTrace;
use crate::model::ContestId;

/// Errors produced by solver and verification operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("negative input to contest success function: f({x}, {y})")]
    NegativeCsfInput { x: f64, y: f64 },

    #[error("effort missing for contestant {contestant} in contest {contest}")]
    MissingEffort {
        contestant: usize,
        contest: ContestId,
    },

    #[error("contest {contest}: both multipliers are zero")]
    InvalidMultiplier { contest: ContestId },

    #[error("multiplier vector has {got} entries, instance has {want} contestants")]
    MultiplierLength { got: usize, want: usize },

    #[error("multiplier entry {index} is not positive: {value}")]
    NonPositiveMultiplier { index: usize, value: f64 },

    #[error("instance is invalid: {0:?}")]
    InvalidInstance(Vec<String>),

    #[error("profile is invalid: {0:?}")]
    InvalidProfile(Vec<String>),

    #[error("solver did not reach residual {target:.3e} within {iterations} evaluations (best {achieved:.3e})")]
    NonConvergence {
        target: f64,
        achieved: f64,
        iterations: u64,
        trace: Box<SolverTrace>,
    },

    #[error("guaranteed step mode needs a positive regularization entry for contestant {index}")]
    ZeroRegularization { index: usize },

    #[error("regularization vector has {got} entries, instance has {want} contestants")]
    RegularizationLength { got: usize, want: usize },

    #[error("reconstructed efforts exceed budget for contestant {contestant}: {spent} > {budget}")]
    BudgetInfeasible {
        contestant: usize,
        spent: f64,
        budget: f64,
    },

    #[error("bisection bracket failure for contestant {contestant}")]
    BisectionBracket { contestant: usize },

    #[error(
        "target probability {value} for contestant {contestant} in contest {contest} outside (0,1)"
    )]
    TargetOutOfRange {
        contestant: usize,
        contest: ContestId,
        value: f64,
    },

    #[error("contestant {index} holds more than half the total effort: {effort} > {half_total}")]
    DominantContestant {
        index: usize,
        effort: f64,
        half_total: f64,
    },

    #[error("best-response dynamics exceeded {0} steps without reaching a fixed point")]
    ImprovementBound(usize),

    #[error("{0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
