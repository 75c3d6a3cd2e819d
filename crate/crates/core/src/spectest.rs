//! The specification test itself.
//!
//! The test statistic is a weighted Cramer-von-Mises-type distance between
//! the kernel CDF of the observations and the convolution CDF implied by the
//! fitted model, both evaluated on a weight grid: with
//! `V(u) = sqrt(n) (F_kernel(u) - F_conv(u))` the statistic is
//! `sum_m w_m V(u_m)^2`. Critical values come from a moving-block bootstrap:
//! each round resamples the series in blocks, recomputes the profile V* the
//! same way (on the grid of the original series), and contributes
//! `sum_m w_m (V*(u_m) - V(u_m))^2`; the decision compares the statistic
//! against an upper order statistic of those round values.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    convolution_cdf_profile, fit_least_squares, kernel_cdf_profile, model_at, FittedModel,
    KernelSpec, MeanFamily,
};
use crate::process::TimeSeries;
use crate::seeding::{self, Role};

/// Evaluation points with their quadrature weights; a discretization of a
/// probability weight function, so the weights sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl WeightGrid {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid has no points".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch { left: points.len(), right: weights.len() });
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid(format!("point {i} is not finite")));
        }
        if let Some(w) = points.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!(
                "points must be strictly increasing, but point {} >= point {}",
                w,
                w + 1
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidGrid(format!("weight {i} is negative or not finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidGrid(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightGrid { points, weights })
    }

    /// Equally spaced points on [lo, hi] with uniform weights.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {count}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidGrid(format!("invalid range [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let points: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
        let weights = vec![1.0 / count as f64; count];
        WeightGrid::new(points, weights)
    }

    /// Uniform grid spanning the empirical quantile range of `series`.
    /// Quantiles use sorted-order linear interpolation at rank
    /// `p * (T - 1)`.
    pub fn from_quantiles(series: &TimeSeries, lo_q: f64, hi_q: f64, count: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&lo_q) || !(0.0..=1.0).contains(&hi_q) || lo_q >= hi_q {
            return Err(Error::InvalidGrid(format!(
                "invalid quantile range [{lo_q}, {hi_q}]"
            )));
        }
        let mut sorted = series.values().to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let lo = interp_quantile(&sorted, lo_q);
        let hi = interp_quantile(&sorted, hi_q);
        if lo >= hi {
            return Err(Error::InvalidGrid(format!(
                "degenerate quantile range [{lo}, {hi}]"
            )));
        }
        WeightGrid::uniform(lo, hi, count)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn interp_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// How the weight grid of a test run is obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GridSpec {
    /// Uniform grid over an empirical quantile range of the observed series;
    /// the default spans [q_0.01, q_0.99] with 101 points.
    Quantile { lower: f64, upper: f64, points: usize },
    /// A fully specified grid.
    Fixed { grid: WeightGrid },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Quantile { lower: 0.01, upper: 0.99, points: 101 }
    }
}

impl GridSpec {
    pub fn materialize(&self, series: &TimeSeries) -> Result<WeightGrid> {
        match self {
            GridSpec::Quantile { lower, upper, points } => {
                WeightGrid::from_quantiles(series, *lower, *upper, *points)
            }
            GridSpec::Fixed { grid } => {
                // Re-validate: a Fixed grid may arrive from deserialized input.
                WeightGrid::new(grid.points.clone(), grid.weights.clone())
            }
        }
    }
}

/// Configuration of one test run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    pub kernel: KernelSpec,
    /// Length of each bootstrap block.
    pub block_length: usize,
    /// Number of bootstrap rounds.
    pub bootstrap_iterations: usize,
    pub grid: GridSpec,
    /// Rejection levels, strictly descending, each in (0, 1).
    pub alphas: Vec<f64>,
    /// Refit the parameter on every resampled series (the default) or keep
    /// the original estimate and only recompute residuals and means.
    pub refit: bool,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            kernel: KernelSpec::uniform(0.1),
            block_length: 10,
            bootstrap_iterations: 200,
            grid: GridSpec::default(),
            alphas: vec![0.10, 0.075, 0.05, 0.025, 0.01],
            refit: true,
            seed: 0,
        }
    }
}

impl TestConfig {
    pub fn validate(&self, series_len: usize) -> Result<()> {
        self.kernel.validate()?;
        if self.block_length == 0 {
            return Err(Error::InvalidConfig("block_length must be at least 1".into()));
        }
        if self.block_length > series_len {
            return Err(Error::BlockTooLong {
                block_length: self.block_length,
                series_len,
            });
        }
        if self.bootstrap_iterations == 0 {
            return Err(Error::InvalidConfig("bootstrap_iterations must be at least 1".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidConfig("alphas must not be empty".into()));
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            if !(a.is_finite() && 0.0 < a && a < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "alphas[{i}] = {a} is outside (0, 1)"
                )));
            }
        }
        if let Some(i) = self.alphas.windows(2).position(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "alphas must be strictly descending, but alphas[{}] <= alphas[{}]",
                i,
                i + 1
            )));
        }
        if let GridSpec::Quantile { lower, upper, points } = self.grid {
            if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) || lower >= upper {
                return Err(Error::InvalidConfig(format!(
                    "grid quantile range [{lower}, {upper}] is invalid"
                )));
            }
            if points < 2 {
                return Err(Error::InvalidConfig(format!(
                    "grid needs at least 2 points, got {points}"
                )));
            }
        }
        Ok(())
    }
}

/// Everything a test run produces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestOutcome {
    pub theta_hat: f64,
    /// The integrated statistic of the observed series.
    pub statistic: f64,
    /// One centered integrated statistic per bootstrap round, in round order.
    pub bootstrap_stats: Vec<f64>,
    /// (alpha, bootstrap critical value), in the order of the configured alphas.
    pub critical_values: Vec<(f64, f64)>,
    /// (alpha, statistic > critical value), aligned with `critical_values`.
    pub decisions: Vec<(f64, bool)>,
    /// The realized weight grid; bootstrap rounds reuse it.
    pub grid: WeightGrid,
}

impl TestOutcome {
    pub fn critical_value(&self, alpha: f64) -> Option<f64> {
        self.critical_values.iter().find(|(a, _)| *a == alpha).map(|(_, q)| *q)
    }

    pub fn rejects(&self, alpha: f64) -> Option<bool> {
        self.decisions.iter().find(|(a, _)| *a == alpha).map(|(_, d)| *d)
    }
}

/// Profile of the scaled CDF contrast `sqrt(n) (F_kernel - F_conv)` over the
/// grid points. The kernel CDF runs over all T observations; the convolution
/// CDF and the scale n = T - 1 come from the lagged pairs.
pub fn statistic_profile(
    series: &TimeSeries,
    fit: &FittedModel,
    kernel: &KernelSpec,
    grid: &WeightGrid,
) -> Result<Vec<f64>> {
    if fit.n() + 1 != series.len() {
        return Err(Error::LengthMismatch { left: fit.n() + 1, right: series.len() });
    }
    let f_kernel = kernel_cdf_profile(series, kernel, grid.points())?;
    let f_conv = convolution_cdf_profile(fit, kernel, grid.points())?;
    let scale = (fit.n() as f64).sqrt();
    Ok(f_kernel.iter().zip(&f_conv).map(|(k, c)| scale * (k - c)).collect())
}

/// Weighted integral of the squared profile, `sum_m w_m profile_m^2`.
pub fn integrate_statistic(profile: &[f64], grid: &WeightGrid) -> Result<f64> {
    if profile.len() != grid.len() {
        return Err(Error::LengthMismatch { left: profile.len(), right: grid.len() });
    }
    Ok(profile.iter().zip(grid.weights()).map(|(v, w)| w * v * v).sum())
}

/// Moving-block resample: ceil(T / block_length) blocks of `block_length`
/// consecutive observations, each starting at an index drawn uniformly from
/// the valid range, concatenated and truncated to length T.
pub fn block_resample<R: Rng + ?Sized>(
    series: &TimeSeries,
    block_length: usize,
    rng: &mut R,
) -> Result<TimeSeries> {
    let values = series.values();
    let t = values.len();
    if block_length == 0 {
        return Err(Error::InvalidConfig("block_length must be at least 1".into()));
    }
    if block_length > t {
        return Err(Error::BlockTooLong { block_length, series_len: t });
    }
    let n_blocks = t.div_ceil(block_length);
    let mut out = Vec::with_capacity(n_blocks * block_length);
    for _ in 0..n_blocks {
        let start = rng.random_range(0..=t - block_length);
        out.extend_from_slice(&values[start..start + block_length]);
    }
    out.truncate(t);
    TimeSeries::new(out)
}

/// The fitting procedure a test run uses, injectable so tests can observe or
/// replace it. [`run_test`] uses [`LeastSquares`].
pub trait Fitter: Sync {
    fn fit(&self, series: &TimeSeries, family: &MeanFamily) -> Result<FittedModel>;
}

/// The default fitter; delegates to [`fit_least_squares`].
pub struct LeastSquares;

impl Fitter for LeastSquares {
    fn fit(&self, series: &TimeSeries, family: &MeanFamily) -> Result<FittedModel> {
        fit_least_squares(series, family)
    }
}

/// Runs the full test: fit, statistic, bootstrap calibration, decisions.
pub fn run_test(
    series: &TimeSeries,
    family: &MeanFamily,
    config: &TestConfig,
) -> Result<TestOutcome> {
    run_test_with_fitter(series, family, config, &LeastSquares)
}

/// [`run_test`] with an injected fitting procedure. The same fitter serves
/// the observed series and, when refitting is on, every bootstrap round.
pub fn run_test_with_fitter(
    series: &TimeSeries,
    family: &MeanFamily,
    config: &TestConfig,
    fitter: &dyn Fitter,
) -> Result<TestOutcome> {
    config.validate(series.len())?;
    let grid = config.grid.materialize(series)?;
    let fit = fitter.fit(series, family)?;
    let profile = statistic_profile(series, &fit, &config.kernel, &grid)?;
    let statistic = integrate_statistic(&profile, &grid)?;

    let b_iter = config.bootstrap_iterations;
    for &(mut alpha) in &config.alphas {
        alpha *= b_iter as f64;
        if alpha < 1.0 {
            log::warn!(
                "bootstrap_iterations = {b_iter} is too small for the requested level: \
                 the critical value degenerates to the bootstrap sample maximum"
            );
            break;
        }
    }

    // Rounds are independent streams keyed by (config.seed, round), so the
    // result does not depend on evaluation order or thread count.
    let bootstrap_stats: Vec<f64> = (0..b_iter)
        .into_par_iter()
        .map(|round| -> Result<f64> {
            let mut rng = seeding::rng(seeding::derive_seed(
                config.seed,
                round as u64,
                Role::Bootstrap,
            ));
            let resampled = block_resample(series, config.block_length, &mut rng)?;
            let refit = if config.refit {
                fitter.fit(&resampled, family)?
            } else {
                model_at(&resampled, family, fit.theta_hat())?
            };
            let star = statistic_profile(&resampled, &refit, &config.kernel, &grid)?;
            let centered: f64 = star
                .iter()
                .zip(&profile)
                .zip(grid.weights())
                .map(|((s, p), w)| w * (s - p) * (s - p))
                .sum();
            Ok(centered)
        })
        .enumerate()
        .map(|(round, r)| r.map_err(|e| Error::BootstrapRound { round, source: Box::new(e) }))
        .collect::<Result<_>>()?;

    let mut sorted = bootstrap_stats.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let critical_values: Vec<(f64, f64)> = config
        .alphas
        .iter()
        .map(|&alpha| (alpha, upper_order_statistic(&sorted, alpha)))
        .collect();
    let decisions: Vec<(f64, bool)> =
        critical_values.iter().map(|&(alpha, q)| (alpha, statistic > q)).collect();

    Ok(TestOutcome { theta_hat: fit.theta_hat(), statistic, bootstrap_stats, critical_values, decisions, grid })
}

/// The ceil((1 - alpha) B)-th smallest of B sorted values. The tiny slack
/// keeps ranks like 0.9 * 200 from landing one past the intended order
/// statistic through floating-point noise.
fn upper_order_statistic(sorted: &[f64], alpha: f64) -> f64 {
    let b = sorted.len() as f64;
    let rank = ((1.0 - alpha) * b - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}
