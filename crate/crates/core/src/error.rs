use thiserror::Error;

use crate::estimators::KernelKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("theta0 = {0} violates the contraction requirement |theta0| < 1")]
    NonContraction(f64),

    #[error("parameter {name} = {value} must be finite")]
    NonFiniteParameter { name: &'static str, value: f64 },

    #[error("series of length {actual} is too short; at least {required} values are required")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("series value at index {0} is not finite")]
    NonFiniteValue(usize),

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("degenerate regressor: the gradient vanishes on every lagged value")]
    DegenerateFit,

    #[error("least-squares fit did not converge within {iterations} iterations")]
    FitDidNotConverge { iterations: usize },

    #[error(
        "the closed-form convolution CDF supports the {supported:?} kernel only, got {got:?}; \
         use the quadrature oracle for other kernels"
    )]
    UnsupportedKernel { supported: KernelKind, got: KernelKind },

    #[error("quadrature needs at least {required} panels, got {actual}")]
    TooFewPanels { required: usize, actual: usize },

    #[error("invalid weight grid: {0}")]
    InvalidGrid(String),

    #[error("invalid test configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("block length {block_length} exceeds the series length {series_len}")]
    BlockTooLong { block_length: usize, series_len: usize },

    #[error("bootstrap round {round} failed: {source}")]
    BootstrapRound { round: usize, source: Box<Error> },

    #[error(
        "replication {index} (simulation seed {sim_seed}, test seed {test_seed}) failed: {source}"
    )]
    Replication { index: usize, sim_seed: u64, test_seed: u64, source: Box<Error> },

    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),
}
