//! JSON plan documents that expand into lists of experiments.
//!
//! A document pins a schema version and holds entries; an entry may sweep the
//! series length, block length, and bootstrap budget, and expands into the
//! cartesian product of those axes with a bracketed label suffix.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::montecarlo::ExperimentPlan;
use crate::process::{Hypothesis, SimSpec, DEFAULT_BURN_IN};
use crate::estimators::KernelSpec;
use crate::spectest::{GridSpec, TestConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// A scalar or a list, so sweep axes read naturally in JSON.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub schema: u32,
    pub experiments: Vec<PlanEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub label: String,
    pub hypothesis: Hypothesis,
    #[serde(default = "default_theta0")]
    pub theta0: f64,
    #[serde(default = "default_theta1")]
    pub theta1: f64,
    #[serde(rename = "T")]
    pub t: OneOrMany<usize>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    #[serde(default = "default_block_length")]
    pub block_length: OneOrMany<usize>,
    #[serde(default = "default_bootstrap_iterations")]
    pub bootstrap_iterations: OneOrMany<usize>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_refit")]
    pub refit: bool,
    pub replications: usize,
    pub master_seed: u64,
}

fn default_theta0() -> f64 {
    0.3
}
fn default_theta1() -> f64 {
    0.9
}
fn default_bandwidth() -> f64 {
    0.1
}
fn default_block_length() -> OneOrMany<usize> {
    OneOrMany::One(10)
}
fn default_bootstrap_iterations() -> OneOrMany<usize> {
    OneOrMany::One(200)
}
fn default_alphas() -> Vec<f64> {
    TestConfig::default().alphas
}
fn default_grid_points() -> usize {
    101
}
fn default_refit() -> bool {
    true
}

impl PlanEntry {
    /// Expands the sweep axes into concrete plans. Axes vary with the
    /// rightmost fastest: series length, then block length, then bootstrap
    /// budget. Labels gain a `[T=..,l=..,B=..]` suffix only when the entry
    /// yields more than one plan.
    fn expand(&self) -> Result<Vec<ExperimentPlan>> {
        let ts = self.t.values();
        let blocks = self.block_length.values();
        let budgets = self.bootstrap_iterations.values();
        for (name, axis) in [("T", &ts), ("block_length", &blocks), ("bootstrap_iterations", &budgets)]
        {
            if axis.is_empty() {
                return Err(Error::InvalidPlan(format!(
                    "entry {}: {name} must list at least one value",
                    self.label
                )));
            }
        }
        let multiple = ts.len() * blocks.len() * budgets.len() > 1;

        let mut plans = Vec::with_capacity(ts.len() * blocks.len() * budgets.len());
        for &t in &ts {
            for &block_length in &blocks {
                for &bootstrap_iterations in &budgets {
                    let label = if multiple {
                        format!("{}[T={t},l={block_length},B={bootstrap_iterations}]", self.label)
                    } else {
                        self.label.clone()
                    };
                    let mut sim = SimSpec::new(self.theta0, self.theta1, t, self.hypothesis, 0);
                    sim.burn_in = self.burn_in.unwrap_or(DEFAULT_BURN_IN);
                    let plan = ExperimentPlan {
                        label: label.clone(),
                        sim,
                        test: TestConfig {
                            kernel: KernelSpec::uniform(self.bandwidth),
                            block_length,
                            bootstrap_iterations,
                            grid: GridSpec::Quantile {
                                lower: 0.01,
                                upper: 0.99,
                                points: self.grid_points,
                            },
                            alphas: self.alphas.clone(),
                            refit: self.refit,
                            seed: 0,
                        },
                        replications: self.replications,
                        master_seed: self.master_seed,
                    };
                    plan.validate()
                        .map_err(|e| Error::InvalidPlan(format!("plan {label}: {e}")))?;
                    plans.push(plan);
                }
            }
        }
        Ok(plans)
    }
}

/// Parses a plan document and expands every entry, in document order.
pub fn parse(json: &str) -> Result<Vec<ExperimentPlan>> {
    let doc: PlanDocument = serde_json::from_str(json)
        .map_err(|e| Error::InvalidPlan(format!("malformed plan document: {e}")))?;
    if doc.schema != SCHEMA_VERSION {
        return Err(Error::InvalidPlan(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            doc.schema
        )));
    }
    if doc.experiments.is_empty() {
        return Err(Error::InvalidPlan("document lists no experiments".into()));
    }
    let mut plans = Vec::new();
    for entry in &doc.experiments {
        plans.extend(entry.expand()?);
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_entry_uses_the_defaults() {
        let plans = parse(
            r#"{
                "schema": 1,
                "experiments": [
                    {"label": "one", "hypothesis": "null", "T": 200,
                     "replications": 5, "master_seed": 7}
                ]
            }"#,
        )
        .unwrap();
        assert_eq!(plans.len(), 1);
        let plan = &plans[0];
        assert_eq!(plan.label, "one");
        assert_eq!(plan.sim.length, 200);
        assert_eq!(plan.sim.theta0, 0.3);
        assert_eq!(plan.sim.theta1, 0.9);
        assert_eq!(plan.sim.burn_in, DEFAULT_BURN_IN);
        assert_eq!(plan.test.block_length, 10);
        assert_eq!(plan.test.bootstrap_iterations, 200);
        assert_eq!(plan.test.kernel.bandwidth, 0.1);
        assert_eq!(plan.test.alphas, vec![0.10, 0.075, 0.05, 0.025, 0.01]);
        assert!(plan.test.refit);
        assert_eq!(plan.replications, 5);
        assert_eq!(plan.master_seed, 7);
    }

    #[test]
    fn sweeps_expand_rightmost_fastest() {
        let plans = parse(
            r#"{
                "schema": 1,
                "experiments": [
                    {"label": "grid", "hypothesis": "null",
                     "T": [200, 400], "block_length": [8, 10],
                     "bootstrap_iterations": [40, 80],
                     "replications": 2, "master_seed": 1}
                ]
            }"#,
        )
        .unwrap();
        let labels: Vec<&str> = plans.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(
            labels,
            vec![
                "grid[T=200,l=8,B=40]",
                "grid[T=200,l=8,B=80]",
                "grid[T=200,l=10,B=40]",
                "grid[T=200,l=10,B=80]",
                "grid[T=400,l=8,B=40]",
                "grid[T=400,l=8,B=80]",
                "grid[T=400,l=10,B=40]",
                "grid[T=400,l=10,B=80]",
            ]
        );
    }

    #[test]
    fn singleton_sweeps_keep_the_bare_label() {
        let plans = parse(
            r#"{
                "schema": 1,
                "experiments": [
                    {"label": "bare", "hypothesis": "alternative", "T": [300],
                     "block_length": [10], "bootstrap_iterations": [200],
                     "replications": 1, "master_seed": 2}
                ]
            }"#,
        )
        .unwrap();
        assert_eq!(plans[0].label, "bare");
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let err = parse(r#"{"schema": 2, "experiments": []}"#).unwrap_err();
        assert!(err.to_string().contains("schema version 2"));
    }

    #[test]
    fn empty_experiment_lists_are_rejected() {
        let err = parse(r#"{"schema": 1, "experiments": []}"#).unwrap_err();
        assert!(err.to_string().contains("no experiments"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = parse(
            r#"{
                "schema": 1,
                "experiments": [
                    {"label": "x", "hypothesis": "null", "T": 100,
                     "replications": 1, "master_seed": 0, "bandwith": 0.2}
                ]
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bandwith"));
    }

    #[test]
    fn invalid_expanded_plans_name_the_label() {
        let err = parse(
            r#"{
                "schema": 1,
                "experiments": [
                    {"label": "bad", "hypothesis": "null", "T": [50, 5],
                     "block_length": 20,
                     "replications": 1, "master_seed": 0}
                ]
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bad[T=5,l=20,B=200]"), "{err}");
    }

    #[test]
    fn overridden_burn_in_is_honored() {
        let plans = parse(
            r#"{
                "schema": 1,
                "experiments": [
                    {"label": "warm", "hypothesis": "null", "T": 100,
                     "burn_in": 50, "replications": 1, "master_seed": 0}
                ]
            }"#,
        )
        .unwrap();
        assert_eq!(plans[0].sim.burn_in, 50);
    }
}
