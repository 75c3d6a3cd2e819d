//! Bootstrap specification test for parametric nonlinear autoregressions.
//!
//! The test compares two estimates of the stationary distribution of an
//! observed series: a kernel-smoothed empirical CDF, and a convolution-type
//! CDF implied by a fitted conditional-mean model (residual CDF convolved
//! with a density estimate of the fitted means). Under a correctly specified
//! model the two agree; the weighted integrated squared difference between
//! them is the test statistic, and a moving-block bootstrap supplies its
//! critical values.
//!
//! Modules:
//! - [`process`]: simulation of the null and alternative autoregressions
//! - [`estimators`]: least-squares fit, kernel CDF, convolution CDF and its
//!   quadrature oracle
//! - [`spectest`]: test statistic, block bootstrap, decision rule
//! - [`montecarlo`]: replicated experiments, rejection-rate tables, CSV/JSON
//! - [`plan`]: declarative experiment-plan documents
//! - [`seeding`]: deterministic substream derivation

pub mod error;
pub mod estimators;
pub mod montecarlo;
pub mod plan;
pub mod process;
pub mod seeding;
pub mod spectest;

pub use error::{Error, Result};
pub use estimators::{
    convolution_cdf, convolution_cdf_oracle, fit_least_squares, kernel_cdf, residual_cdf,
    FittedModel, KernelKind, KernelSpec, MeanFamily,
};
pub use montecarlo::{
    results_to_csv, results_to_json, run_experiment, run_table, ExperimentPlan, ExperimentResult,
};
pub use process::{simulate, Hypothesis, SimSpec, TimeSeries};
pub use spectest::{
    block_resample, integrate_statistic, run_test, run_test_with_fitter, statistic_profile, Fitter,
    GridSpec, LeastSquares, TestConfig, TestOutcome, WeightGrid,
};
