//! Estimators for the fitted autoregression.
//!
//! Three cumulative distribution estimates are provided for an observed
//! series X_1..X_T and a fitted conditional-mean model:
//!
//! - [`kernel_cdf`]: kernel-smoothed empirical CDF of the observations,
//! - [`residual_cdf`]: the same smoother applied to the fit residuals,
//! - [`convolution_cdf`]: the model-implied CDF, i.e. the residual CDF
//!   convolved with a kernel density estimate of the fitted conditional
//!   means. Under the uniform kernel the convolution integral has a closed
//!   form, a sum of per-pair ramp terms; [`convolution_cdf_oracle`] evaluates
//!   the defining integral by quadrature instead and exists purely as an
//!   independent check on that algebra.
//!
//! All residual-based estimators work on the T-1 lagged pairs
//! (X_{i-1}, X_i); only the smoothed CDF of the raw series uses all T
//! observations.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::TimeSeries;

/// Default panel budget for the quadrature oracle.
pub const DEFAULT_QUAD_POINTS: usize = 4096;
/// Oracle calls with fewer panels than this are rejected.
pub const MIN_QUAD_POINTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// K(u) = 1/2 on [-1, 1]. The only kind the closed-form convolution
    /// CDF supports.
    Uniform,
    /// K(u) = 3/4 (1 - u^2) on [-1, 1]. Served by the smoothed CDFs and the
    /// quadrature oracle only.
    Epanechnikov,
}

/// A kernel with its bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn uniform(bandwidth: f64) -> Self {
        KernelSpec { kind: KernelKind::Uniform, bandwidth }
    }

    pub fn epanechnikov(bandwidth: f64) -> Self {
        KernelSpec { kind: KernelKind::Epanechnikov, bandwidth }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::InvalidBandwidth(self.bandwidth));
        }
        Ok(())
    }

    /// Kernel density K(u).
    pub fn density(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Uniform => uniform_k(u),
            KernelKind::Epanechnikov => epanechnikov_k(u),
        }
    }

    /// Integrated kernel G(u), the antiderivative of K with G(-1) = 0.
    pub fn integral(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Uniform => uniform_g(u),
            KernelKind::Epanechnikov => epanechnikov_g(u),
        }
    }
}

fn uniform_k(u: f64) -> f64 {
    if (-1.0..=1.0).contains(&u) {
        0.5
    } else {
        0.0
    }
}

fn uniform_g(u: f64) -> f64 {
    if u < -1.0 {
        0.0
    } else if u < 1.0 {
        0.5 * (u + 1.0)
    } else {
        1.0
    }
}

fn epanechnikov_k(u: f64) -> f64 {
    if (-1.0..=1.0).contains(&u) {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

fn epanechnikov_g(u: f64) -> f64 {
    if u < -1.0 {
        0.0
    } else if u < 1.0 {
        0.25 * (2.0 + 3.0 * u - u * u * u)
    } else {
        1.0
    }
}

/// A one-parameter conditional-mean family m_theta(x) with its gradient in
/// theta. The built-in family is [`MeanFamily::scaled_abs`].
#[derive(Clone)]
pub struct MeanFamily {
    name: &'static str,
    eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    grad: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl MeanFamily {
    pub fn new(
        name: &'static str,
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        MeanFamily { name, eval: Arc::new(eval), grad: Arc::new(grad) }
    }

    /// m_theta(x) = theta * |x|: the null conditional mean. Linear in theta,
    /// so the least-squares fit is closed-form, and a contraction in x
    /// whenever |theta| < 1.
    pub fn scaled_abs() -> Self {
        MeanFamily::new("scaled-abs", |theta, x| theta * x.abs(), |_theta, x| x.abs())
    }

    pub fn eval(&self, theta: f64, x: f64) -> f64 {
        (self.eval)(theta, x)
    }

    pub fn grad(&self, theta: f64, x: f64) -> f64 {
        (self.grad)(theta, x)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }
}

impl fmt::Debug for MeanFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeanFamily").field("name", &self.name).finish()
    }
}

/// A fitted model: the parameter estimate plus the residuals and fitted
/// conditional means over the T-1 lagged pairs, index i holding the pair
/// (X_i, X_{i+1}).
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    theta_hat: f64,
    residuals: Vec<f64>,
    fitted_means: Vec<f64>,
}

impl FittedModel {
    /// Assembles a model from raw parts, for synthetic inputs in tests and
    /// tools. Lengths must match and everything must be finite; the
    /// residual/mean bookkeeping against a source series is not checked here.
    pub fn from_parts(theta_hat: f64, residuals: Vec<f64>, fitted_means: Vec<f64>) -> Result<Self> {
        if !theta_hat.is_finite() {
            return Err(Error::NonFiniteParameter { name: "theta_hat", value: theta_hat });
        }
        if residuals.len() != fitted_means.len() {
            return Err(Error::LengthMismatch {
                left: residuals.len(),
                right: fitted_means.len(),
            });
        }
        if residuals.is_empty() {
            return Err(Error::SeriesTooShort { required: 1, actual: 0 });
        }
        if let Some(i) = residuals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        if let Some(i) = fitted_means.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(FittedModel { theta_hat, residuals, fitted_means })
    }

    pub fn theta_hat(&self) -> f64 {
        self.theta_hat
    }

    /// eps_i = X_{i+1} - m(theta_hat, X_i), one per lagged pair.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// m(theta_hat, X_i), aligned with [`FittedModel::residuals`].
    pub fn fitted_means(&self) -> &[f64] {
        &self.fitted_means
    }

    /// Number of lagged pairs, n = T - 1.
    pub fn n(&self) -> usize {
        self.residuals.len()
    }
}

/// Evaluates the family at a fixed parameter over the lagged pairs of
/// `series`, producing the residual/mean decomposition without fitting.
pub fn model_at(series: &TimeSeries, family: &MeanFamily, theta: f64) -> Result<FittedModel> {
    if !theta.is_finite() {
        return Err(Error::NonFiniteParameter { name: "theta", value: theta });
    }
    let x = series.values();
    if x.len() < 2 {
        return Err(Error::SeriesTooShort { required: 2, actual: x.len() });
    }
    let mut residuals = Vec::with_capacity(x.len() - 1);
    let mut fitted_means = Vec::with_capacity(x.len() - 1);
    for i in 1..x.len() {
        let m = family.eval(theta, x[i - 1]);
        if !m.is_finite() {
            return Err(Error::NonFiniteParameter { name: "fitted_mean", value: m });
        }
        fitted_means.push(m);
        residuals.push(x[i] - m);
    }
    Ok(FittedModel { theta_hat: theta, residuals, fitted_means })
}

const FIT_MAX_ITER: usize = 64;
const FIT_STEP_TOL: f64 = 1e-12;

/// Least-squares fit of the family over the lagged pairs, by Gauss-Newton
/// from theta = 0. For families linear in theta (such as the built-in one)
/// the first step lands on the closed-form solution
/// sum X_i m'(X_{i-1}) / sum m'(X_{i-1})^2 and the second certifies
/// convergence.
pub fn fit_least_squares(series: &TimeSeries, family: &MeanFamily) -> Result<FittedModel> {
    let x = series.values();
    if x.len() < 2 {
        return Err(Error::SeriesTooShort { required: 2, actual: x.len() });
    }
    let mut theta = 0.0_f64;
    let mut converged = false;
    for _ in 0..FIT_MAX_ITER {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 1..x.len() {
            let g = family.grad(theta, x[i - 1]);
            let r = x[i] - family.eval(theta, x[i - 1]);
            num += r * g;
            den += g * g;
        }
        if den == 0.0 {
            return Err(Error::DegenerateFit);
        }
        let step = num / den;
        theta += step;
        if !theta.is_finite() {
            return Err(Error::NonFiniteParameter { name: "theta", value: theta });
        }
        if step.abs() <= FIT_STEP_TOL * theta.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::FitDidNotConverge { iterations: FIT_MAX_ITER });
    }
    model_at(series, family, theta)
}

fn smoothed_cdf(data: &[f64], kernel: &KernelSpec, x: f64) -> f64 {
    let b = kernel.bandwidth;
    let mean = data.iter().map(|&v| kernel.integral((x - v) / b)).sum::<f64>() / data.len() as f64;
    // Summation roundoff can overshoot the mathematical range by a few ulps.
    mean.clamp(0.0, 1.0)
}

/// Kernel-smoothed empirical CDF of the observations, (1/T) sum G((x - X_i)/b).
pub fn kernel_cdf(series: &TimeSeries, kernel: &KernelSpec, x: f64) -> Result<f64> {
    kernel.validate()?;
    Ok(smoothed_cdf(series.values(), kernel, x))
}

/// Kernel-smoothed CDF of the fit residuals, (1/n) sum G((x - eps_i)/b).
pub fn residual_cdf(fit: &FittedModel, kernel: &KernelSpec, x: f64) -> Result<f64> {
    kernel.validate()?;
    Ok(smoothed_cdf(fit.residuals(), kernel, x))
}

/// Kernel density estimate of the fitted means, (1/(n b)) sum K((t - m_j)/b).
fn mean_density(means: &[f64], kernel: &KernelSpec, t: f64) -> f64 {
    let b = kernel.bandwidth;
    means.iter().map(|&m| kernel.density((t - m) / b)).sum::<f64>() / (means.len() as f64 * b)
}

/// Antiderivative piece (-t^2 + 2 c t)/(8 b) shared by the interior branches
/// of the closed form.
fn quad_ramp(t: f64, c: f64, b: f64) -> f64 {
    (2.0 * c - t) * t / (8.0 * b)
}

/// One pairwise term of the closed-form convolution CDF under the uniform
/// kernel. With anchor a = fitted_mean + residual the term is 0 left of
/// a - 2b, ramps quadratically to b/2 at a, continues to b at a + 2b, and
/// stays b to the right.
fn uniform_pair_term(x: f64, fitted_mean: f64, residual: f64, b: f64) -> f64 {
    let anchor = fitted_mean + residual;
    if x < anchor - 2.0 * b {
        0.0
    } else if x < anchor {
        let c = x + b - residual;
        quad_ramp(x - residual + b, c, b) - quad_ramp(fitted_mean - b, c, b)
    } else if x < anchor + 2.0 * b {
        let c = x + b - residual;
        b * uniform_g((x - fitted_mean - residual - b) / b) + quad_ramp(fitted_mean + b, c, b)
            - quad_ramp(x - residual - b, c, b)
    } else {
        b
    }
}

fn require_uniform(kernel: &KernelSpec) -> Result<f64> {
    kernel.validate()?;
    if kernel.kind != KernelKind::Uniform {
        return Err(Error::UnsupportedKernel { supported: KernelKind::Uniform, got: kernel.kind });
    }
    Ok(kernel.bandwidth)
}

/// Convolution-type CDF of the fitted model at `x`: the residual CDF
/// convolved with the fitted-mean density, evaluated through its closed form
/// (1/(n^2 b)) sum_ij term(x; m_j, eps_i). Uniform kernel only; see
/// [`convolution_cdf_oracle`] for the direct quadrature of the defining
/// integral.
pub fn convolution_cdf(fit: &FittedModel, kernel: &KernelSpec, x: f64) -> Result<f64> {
    let b = require_uniform(kernel)?;
    let n = fit.n() as f64;
    let mut acc = 0.0;
    for &e in fit.residuals() {
        for &m in fit.fitted_means() {
            acc += uniform_pair_term(x, m, e, b);
        }
    }
    Ok((acc / (n * n * b)).clamp(0.0, 1.0))
}

/// [`convolution_cdf`] evaluated over many points at once.
///
/// Same closed form, regrouped: each branch of the pairwise term is a
/// quadratic polynomial in the fitted mean, so with the means sorted and
/// prefix sums of m and m^2 at hand the inner sum over j collapses to three
/// window sums found by binary search. O((len + n) log n) per point instead
/// of O(n^2), with results equal to the pointwise form up to summation order.
pub fn convolution_cdf_profile(
    fit: &FittedModel,
    kernel: &KernelSpec,
    points: &[f64],
) -> Result<Vec<f64>> {
    let b = require_uniform(kernel)?;
    let mut means = fit.fitted_means().to_vec();
    means.sort_unstable_by(f64::total_cmp);
    let mut p1 = vec![0.0_f64; means.len() + 1];
    let mut p2 = vec![0.0_f64; means.len() + 1];
    for (j, &m) in means.iter().enumerate() {
        p1[j + 1] = p1[j] + m;
        p2[j + 1] = p2[j] + m * m;
    }
    let n = fit.n() as f64;
    let inv8b = 1.0 / (8.0 * b);
    let mut out = Vec::with_capacity(points.len());
    for &x in points {
        let mut acc = 0.0;
        for &e in fit.residuals() {
            let t = x - e;
            let s = t + 2.0 * b;
            // Pairs split by the position of the mean m_j relative to
            // t = x - eps_i: full weight b below t - 2b, the two quadratic
            // ramp branches on (t - 2b, t] and (t, t + 2b], zero above.
            let i1 = means.partition_point(|&m| m <= t - 2.0 * b);
            let i2 = means.partition_point(|&m| m <= t);
            let i3 = means.partition_point(|&m| m <= s);
            acc += b * i1 as f64;
            let c3 = (i2 - i1) as f64;
            let s1 = p1[i2] - p1[i1];
            let s2 = p2[i2] - p2[i1];
            acc += c3 * (0.5 * b + 0.5 * t - t * t * inv8b) + s1 * (t * 0.25 / b - 0.5)
                - s2 * inv8b;
            let c2 = (i3 - i2) as f64;
            let s1 = p1[i3] - p1[i2];
            let s2 = p2[i3] - p2[i2];
            acc += (c2 * s * s - 2.0 * s * s1 + s2) * inv8b;
        }
        out.push((acc / (n * n * b)).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// [`kernel_cdf`] evaluated over many points at once. Uniform kernels use a
/// sorted prefix-sum pass; other kinds fall back to the pointwise sum.
pub fn kernel_cdf_profile(
    series: &TimeSeries,
    kernel: &KernelSpec,
    points: &[f64],
) -> Result<Vec<f64>> {
    kernel.validate()?;
    let values = series.values();
    if kernel.kind != KernelKind::Uniform {
        return Ok(points.iter().map(|&x| smoothed_cdf(values, kernel, x)).collect());
    }
    let b = kernel.bandwidth;
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut p1 = vec![0.0_f64; sorted.len() + 1];
    for (j, &v) in sorted.iter().enumerate() {
        p1[j + 1] = p1[j] + v;
    }
    let t_len = values.len() as f64;
    let mut out = Vec::with_capacity(points.len());
    for &x in points {
        // Observations at or below x - b contribute 1, the window
        // (x - b, x + b] contributes the linear part of G.
        let i1 = sorted.partition_point(|&v| v <= x - b);
        let i3 = sorted.partition_point(|&v| v <= x + b);
        let cnt = (i3 - i1) as f64;
        let win = (cnt * (x + b) - (p1[i3] - p1[i1])) / (2.0 * b);
        out.push(((i1 as f64 + win) / t_len).clamp(0.0, 1.0));
    }
    Ok(out)
}

// 3-node Gauss-Legendre panel rule. Nodes are interior, which matters: the
// uniform-kernel density estimate jumps exactly at the panel boundaries laid
// down below, and an endpoint-based rule would sample those jump points.
const GL3_OFFSET: f64 = 0.774_596_669_241_483_4; // sqrt(3/5)
const GL3_W_MID: f64 = 8.0 / 9.0;
const GL3_W_OUT: f64 = 5.0 / 9.0;

fn gl3_panel(f: &impl Fn(f64) -> f64, l: f64, r: f64) -> f64 {
    let c = 0.5 * (l + r);
    let h = 0.5 * (r - l);
    h * (GL3_W_OUT * f(c - h * GL3_OFFSET) + GL3_W_MID * f(c) + GL3_W_OUT * f(c + h * GL3_OFFSET))
}

/// Direct quadrature of the defining convolution integral
/// `int F_eps(x - t) f_means(t) dt`, used as an independent check on
/// [`convolution_cdf`].
///
/// The integrand is only piecewise smooth: the density factor breaks at every
/// m_j +- b (a jump for the uniform kernel) and the CDF factor at every
/// x - eps_i -+ b. The panel budget is therefore distributed over the pieces
/// delimited by those points and each panel is integrated with a 3-node
/// Gauss-Legendre rule. On every piece both factors are polynomials (degree
/// <= 1 uniform, <= 3 Epanechnikov CDF factor times <= 2 density), so the
/// rule, exact through degree 5, integrates them up to roundoff; for other
/// integrands the panel error is O(h^6).
pub fn convolution_cdf_oracle(
    fit: &FittedModel,
    kernel: &KernelSpec,
    x: f64,
    quad_points: usize,
) -> Result<f64> {
    kernel.validate()?;
    if quad_points < MIN_QUAD_POINTS {
        return Err(Error::TooFewPanels { required: MIN_QUAD_POINTS, actual: quad_points });
    }
    let b = kernel.bandwidth;
    let means = fit.fitted_means();
    let residuals = fit.residuals();
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min) - b;
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + b;

    let mut cuts: Vec<f64> = Vec::with_capacity(2 * (means.len() + residuals.len()) + 2);
    cuts.push(lo);
    cuts.push(hi);
    for &m in means {
        cuts.push(m - b);
        cuts.push(m + b);
    }
    for &e in residuals {
        cuts.push(x - e - b);
        cuts.push(x - e + b);
    }
    cuts.retain(|&c| c >= lo && c <= hi);
    cuts.sort_unstable_by(f64::total_cmp);
    cuts.dedup();

    let integrand = |t: f64| smoothed_cdf(residuals, kernel, x - t) * mean_density(means, kernel, t);
    let total_len = hi - lo;
    let mut acc = 0.0;
    for piece in cuts.windows(2) {
        let (l, r) = (piece[0], piece[1]);
        if r <= l {
            continue;
        }
        let panels = ((quad_points as f64 * (r - l) / total_len).ceil() as usize).max(1);
        let h = (r - l) / panels as f64;
        for k in 0..panels {
            let pl = l + k as f64 * h;
            let pr = if k + 1 == panels { r } else { l + (k + 1) as f64 * h };
            acc += gl3_panel(&integrand, pl, pr);
        }
    }
    Ok(acc.clamp(0.0, 1.0))
}
