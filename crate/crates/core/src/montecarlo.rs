//! Replicated experiments: rejection rates of the test over many simulated
//! series, with deterministic parallelism and fixed-format CSV/JSON output.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::MeanFamily;
use crate::process::{simulate, SimSpec};
use crate::seeding::{derive_seed, Role};
use crate::spectest::{run_test, TestConfig};

/// One experiment: a simulation template, a test template, and a replication
/// budget. The `seed` fields inside the templates are ignored; every
/// replication derives its own simulation and test seeds from `master_seed`
/// and the replication index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub label: String,
    pub sim: SimSpec,
    pub test: TestConfig,
    pub replications: usize,
    pub master_seed: u64,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        self.sim.validate()?;
        self.test.validate(self.sim.length)
    }
}

/// The derived seeds of one replication, recorded for reproducibility.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationSeeds {
    pub index: usize,
    pub simulation: u64,
    pub test: u64,
}

/// Aggregated outcome of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    /// (alpha, rejections), in the order of the plan's alphas.
    pub rejection_count: Vec<(f64, usize)>,
    /// (alpha, rejections / replications), aligned with `rejection_count`.
    pub rejection_rate: Vec<(f64, f64)>,
    pub seeds: Vec<ReplicationSeeds>,
    #[serde(serialize_with = "serialize_secs")]
    pub elapsed: Duration,
}

fn serialize_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl ExperimentResult {
    pub fn rate(&self, alpha: f64) -> Option<f64> {
        self.rejection_rate.iter().find(|(a, _)| *a == alpha).map(|(_, r)| *r)
    }
}

/// Runs every replication of a plan and aggregates the rejection decisions.
///
/// Replications are independent substreams of the master seed, so the result
/// is identical for any worker-pool size; they run in parallel and are
/// reduced in index order. The first failing replication aborts the
/// experiment with its index and seeds attached.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    plan.validate()?;
    let started = Instant::now();
    let family = MeanFamily::scaled_abs();
    let reps = plan.replications;
    let progress_step = (reps / 10).max(1);
    let completed = AtomicUsize::new(0);

    let seeds: Vec<ReplicationSeeds> = (0..reps)
        .map(|index| ReplicationSeeds {
            index,
            simulation: derive_seed(plan.master_seed, index as u64, Role::Simulation),
            test: derive_seed(plan.master_seed, index as u64, Role::Test),
        })
        .collect();

    let decisions: Vec<Vec<(f64, bool)>> = seeds
        .par_iter()
        .map(|rep| -> Result<Vec<(f64, bool)>> {
            let run = || -> Result<Vec<(f64, bool)>> {
                let mut spec = plan.sim;
                spec.seed = rep.simulation;
                let series = simulate(&spec)?;
                let mut config = plan.test.clone();
                config.seed = rep.test;
                let outcome = run_test(&series, &family, &config)?;
                Ok(outcome.decisions)
            };
            let decisions = run().map_err(|e| Error::Replication {
                index: rep.index,
                sim_seed: rep.simulation,
                test_seed: rep.test,
                source: Box::new(e),
            })?;
            let done = completed.fetch_add(1, Ordering::Relaxed) + 1;
            if done % progress_step == 0 || done == reps {
                log::info!("{}: {done}/{reps} replications", plan.label);
            }
            Ok(decisions)
        })
        .collect::<Result<_>>()?;

    let alphas = &plan.test.alphas;
    let mut counts = vec![0_usize; alphas.len()];
    for rep in &decisions {
        debug_assert_eq!(rep.len(), alphas.len());
        // Rejection at a small alpha implies rejection at every larger one;
        // the alphas are descending, so the flags must be non-increasing.
        debug_assert!(rep.windows(2).all(|w| w[0].1 || !w[1].1));
        for (slot, &(_, rejected)) in counts.iter_mut().zip(rep) {
            if rejected {
                *slot += 1;
            }
        }
    }
    let rejection_count: Vec<(f64, usize)> =
        alphas.iter().copied().zip(counts.iter().copied()).collect();
    let rejection_rate: Vec<(f64, f64)> = rejection_count
        .iter()
        .map(|&(a, c)| (a, c as f64 / reps as f64))
        .collect();

    Ok(ExperimentResult {
        plan: plan.clone(),
        rejection_count,
        rejection_rate,
        seeds,
        elapsed: started.elapsed(),
    })
}

/// Runs a list of plans in order. A failing plan yields an error entry but
/// does not stop its siblings.
pub fn run_table(plans: &[ExperimentPlan]) -> Vec<Result<ExperimentResult>> {
    plans
        .iter()
        .enumerate()
        .map(|(i, plan)| {
            log::info!("plan {}/{}: {}", i + 1, plans.len(), plan.label);
            let result = run_experiment(plan);
            if let Err(e) = &result {
                log::error!("plan {} failed: {e}", plan.label);
            }
            result
        })
        .collect()
}

/// Formats a float with six significant digits, the fixed precision of the
/// CSV output.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn csv_quote(label: &str) -> String {
    if label.contains([',', '"', '\n']) {
        format!("\"{}\"", label.replace('"', "\"\""))
    } else {
        label.to_string()
    }
}

/// Fixed column order of every results CSV.
pub const CSV_HEADER: &str =
    "label,T,hypothesis,theta0,theta1,b,l_B,B_Iter,replications,alpha,rejection_count,rejection_rate";

/// Renders results as CSV, one row per (experiment, alpha).
pub fn results_to_csv<'a, I>(results: I) -> String
where
    I: IntoIterator<Item = &'a ExperimentResult>,
{
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for result in results {
        let plan = &result.plan;
        for (&(alpha, count), &(_, rate)) in
            result.rejection_count.iter().zip(&result.rejection_rate)
        {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                csv_quote(&plan.label),
                plan.sim.length,
                plan.sim.hypothesis,
                sig6(plan.sim.theta0),
                sig6(plan.sim.theta1),
                sig6(plan.test.kernel.bandwidth),
                plan.test.block_length,
                plan.test.bootstrap_iterations,
                plan.replications,
                sig6(alpha),
                count,
                sig6(rate),
            ));
        }
    }
    out
}

/// Renders results as pretty JSON with the full plan echo and per-replication
/// seeds.
pub fn results_to_json(results: &[ExperimentResult]) -> Result<String> {
    serde_json::to_string_pretty(results)
        .map_err(|e| Error::InvalidConfig(format!("serializing results failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::Hypothesis;
    use crate::spectest::GridSpec;

    fn tiny_plan(label: &str, reps: usize) -> ExperimentPlan {
        ExperimentPlan {
            label: label.to_string(),
            sim: SimSpec::new(0.3, 0.9, 60, Hypothesis::Null, 0),
            test: TestConfig {
                bootstrap_iterations: 20,
                grid: GridSpec::Quantile { lower: 0.01, upper: 0.99, points: 21 },
                ..TestConfig::default()
            },
            replications: reps,
            master_seed: 99,
        }
    }

    #[test]
    fn single_replication_rates_are_zero_or_one() {
        let result = run_experiment(&tiny_plan("single", 1)).unwrap();
        for &(_, rate) in &result.rejection_rate {
            assert!(rate == 0.0 || rate == 1.0);
        }
        assert_eq!(result.seeds.len(), 1);
    }

    #[test]
    fn experiments_are_deterministic() {
        let plan = tiny_plan("twice", 8);
        let a = run_experiment(&plan).unwrap();
        let b = run_experiment(&plan).unwrap();
        assert_eq!(a.rejection_count, b.rejection_count);
        assert_eq!(a.seeds, b.seeds);
        assert_eq!(results_to_csv(&[a]), results_to_csv(&[b]));
    }

    #[test]
    fn replication_seeds_are_pairwise_distinct() {
        let result = run_experiment(&tiny_plan("seeds", 12)).unwrap();
        for (i, a) in result.seeds.iter().enumerate() {
            assert_eq!(a.index, i);
            for b in &result.seeds[i + 1..] {
                assert_ne!(a.simulation, b.simulation);
                assert_ne!(a.test, b.test);
            }
            assert_ne!(a.simulation, a.test);
        }
    }

    #[test]
    fn failing_plans_do_not_stop_their_siblings() {
        let good = tiny_plan("good", 2);
        let mut bad = tiny_plan("bad", 2);
        bad.test.block_length = 1000; // exceeds the series length
        let results = run_table(&[bad, good]);
        assert_eq!(results.len(), 2);
        assert!(results[0].is_err());
        assert!(results[1].is_ok());
        assert_eq!(results[1].as_ref().unwrap().plan.label, "good");
    }

    #[test]
    fn invalid_plans_are_rejected_up_front() {
        let mut plan = tiny_plan("zero", 0);
        assert!(plan.validate().is_err());
        plan.replications = 1;
        plan.sim.theta0 = 1.5;
        assert!(matches!(plan.validate(), Err(Error::NonContraction(_))));
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(0.1), "0.100000");
        assert_eq!(sig6(0.05), "0.0500000");
        assert_eq!(sig6(0.101), "0.101000");
        assert_eq!(sig6(123.456), "123.456");
        assert_eq!(sig6(-0.025), "-0.0250000");
        assert_eq!(sig6(1.0), "1.00000");
    }

    #[test]
    fn csv_has_the_fixed_layout() {
        let result = run_experiment(&tiny_plan("layout, with comma", 2)).unwrap();
        let csv = results_to_csv(&[result]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let first = lines.next().unwrap();
        assert!(first.starts_with("\"layout, with comma\",60,null,0.300000,0.900000,0.100000,10,20,2,0.100000,"));
        // one row per alpha
        assert_eq!(csv.lines().count(), 1 + 5);
    }

    #[test]
    fn json_round_trips_the_plan_echo() {
        let result = run_experiment(&tiny_plan("json", 2)).unwrap();
        let json = results_to_json(std::slice::from_ref(&result)).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed[0]["plan"]["label"], "json");
        assert_eq!(parsed[0]["plan"]["replications"], 2);
        assert_eq!(parsed[0]["seeds"].as_array().unwrap().len(), 2);
        assert!(parsed[0]["elapsed"].as_f64().unwrap() >= 0.0);
    }
}
