//! Simulation of the null and alternative first-order autoregressions.
//!
//! The null process follows `X_i = theta0 * |X_{i-1}| + eps_i` with iid
//! standard normal innovations. The alternative keeps the conditional mean but
//! multiplies each innovation by `sqrt(theta0^2 + theta1^2 * X_{i-1}^2)`,
//! which breaks the constant-innovation-variance form the test is built for.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// Steps discarded before recording when a spec does not override it.
pub const DEFAULT_BURN_IN: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    /// Homoskedastic innovations: the model form under test.
    Null,
    /// Conditionally heteroskedastic innovations.
    Alternative,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::Null => f.write_str("null"),
            Hypothesis::Alternative => f.write_str("alternative"),
        }
    }
}

/// Complete description of one simulated series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub theta0: f64,
    /// Innovation-scale coefficient; only read under [`Hypothesis::Alternative`].
    pub theta1: f64,
    /// Recorded length T.
    pub length: usize,
    pub hypothesis: Hypothesis,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl SimSpec {
    /// A spec with the default burn-in.
    pub fn new(theta0: f64, theta1: f64, length: usize, hypothesis: Hypothesis, seed: u64) -> Self {
        SimSpec { theta0, theta1, length, hypothesis, seed, burn_in: DEFAULT_BURN_IN }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta0.is_finite() {
            return Err(Error::NonFiniteParameter { name: "theta0", value: self.theta0 });
        }
        if !self.theta1.is_finite() {
            return Err(Error::NonFiniteParameter { name: "theta1", value: self.theta1 });
        }
        // |theta0| < 1 keeps the conditional-mean recursion contracting, which
        // is what makes the burn-in converge to the stationary law.
        if self.theta0.abs() >= 1.0 {
            return Err(Error::NonContraction(self.theta0));
        }
        if self.length < 2 {
            return Err(Error::SeriesTooShort { required: 2, actual: self.length });
        }
        Ok(())
    }
}

/// A finite-valued observed series, optionally carrying its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    spec: Option<SimSpec>,
}

impl TimeSeries {
    /// Wraps raw observations, rejecting empty and non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::SeriesTooShort { required: 1, actual: 0 });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(TimeSeries { values, spec: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The spec that generated this series, if it came from [`simulate`].
    pub fn spec(&self) -> Option<&SimSpec> {
        self.spec.as_ref()
    }
}

fn advance(spec: &SimSpec, prev: f64, eps: f64) -> f64 {
    let mean = spec.theta0 * prev.abs();
    match spec.hypothesis {
        Hypothesis::Null => mean + eps,
        Hypothesis::Alternative => {
            let scale =
                (spec.theta0 * spec.theta0 + spec.theta1 * spec.theta1 * prev * prev).sqrt();
            mean + eps * scale
        }
    }
}

/// Runs the recursion from `X_0 = 0`, discards `burn_in` steps, and records
/// the next `length` values. Identical specs give bit-identical series.
pub fn simulate(spec: &SimSpec) -> Result<TimeSeries> {
    spec.validate()?;
    let mut rng = seeding::rng(spec.seed);
    let mut values = Vec::with_capacity(spec.length);
    let mut x = 0.0_f64;
    for step in 0..spec.burn_in + spec.length {
        let eps: f64 = rng.sample(StandardNormal);
        x = advance(spec, x, eps);
        if step >= spec.burn_in {
            values.push(x);
        }
    }
    Ok(TimeSeries { values, spec: Some(*spec) })
}
