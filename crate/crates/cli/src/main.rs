//! Command line front end: simulate series, test a series from a file, and
//! run experiment plans.
//!
//! Exit codes: 0 success, 2 bad input (flags, files, plan documents), 1
//! failures during computation or output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use convspec::montecarlo::{results_to_csv, results_to_json, run_table};
use convspec::process::{simulate, Hypothesis, SimSpec, TimeSeries, DEFAULT_BURN_IN};
use convspec::spectest::{run_test, GridSpec, TestConfig};
use convspec::{plan, Error, KernelSpec, MeanFamily};

#[derive(Parser)]
#[command(name = "convspec", version, about = "Bootstrap specification test for nonlinear autoregressions")]
struct Cli {
    /// Worker threads for bootstrap rounds and replications (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from the null or alternative autoregression
    Simulate(SimulateArgs),
    /// Test a series read from a file, one value per line
    Test(TestArgs),
    /// Run every experiment of a JSON plan document
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HypothesisArg {
    Null,
    Alternative,
}

impl From<HypothesisArg> for Hypothesis {
    fn from(h: HypothesisArg) -> Self {
        match h {
            HypothesisArg::Null => Hypothesis::Null,
            HypothesisArg::Alternative => Hypothesis::Alternative,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    /// Series length T
    #[arg(short = 'T', long)]
    length: usize,
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    theta0: f64,
    #[arg(long, default_value_t = 0.9, allow_hyphen_values = true)]
    theta1: f64,
    #[arg(long, value_enum, default_value_t = HypothesisArg::Null)]
    hypothesis: HypothesisArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Warm-up steps discarded before recording
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    /// Write the series here and its generator spec to `<output>.json`;
    /// stdout when absent
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// Series file: one value per line, `#` starts a comment
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    bandwidth: f64,
    #[arg(long, default_value_t = 10)]
    block_length: usize,
    #[arg(long, default_value_t = 200)]
    bootstrap_iters: usize,
    /// Rejection levels, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.10,0.075,0.05,0.025,0.01")]
    alphas: Vec<f64>,
    /// Points of the weight grid over the inner quantile range
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    /// Keep the original parameter estimate in bootstrap rounds instead of
    /// refitting
    #[arg(long)]
    no_refit: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON plan document
    plan: PathBuf,
    /// Output prefix: writes `<prefix>.csv` and `<prefix>.json`; stdout CSV
    /// when absent
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the replication count of every experiment
    #[arg(long)]
    replications: Option<usize>,
}

/// A failure plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    /// Input and configuration problems exit 2; failures while computing
    /// exit 1.
    fn from_error(e: Error) -> Self {
        match e {
            Error::DegenerateFit
            | Error::FitDidNotConverge { .. }
            | Error::BootstrapRound { .. }
            | Error::Replication { .. } => Failure::runtime(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: setting up {threads} worker threads failed: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(args) => run_simulate(&args),
        Command::Test(args) => run_tested(&args),
        Command::Experiment(args) => run_experiments(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let spec = SimSpec {
        theta0: args.theta0,
        theta1: args.theta1,
        length: args.length,
        hypothesis: args.hypothesis.into(),
        seed: args.seed,
        burn_in: args.burn_in,
    };
    spec.validate().map_err(Failure::from_error)?;
    let series = simulate(&spec).map_err(Failure::from_error)?;
    let mut body = String::new();
    for v in series.values() {
        writeln!(body, "{v}").expect("string write");
    }
    match &args.output {
        None => print!("{body}"),
        Some(path) => {
            std::fs::write(path, &body)
                .map_err(|e| Failure::runtime(format!("writing {}: {e}", path.display())))?;
            let sidecar = sidecar_path(path);
            let json = serde_json::to_string_pretty(&spec)
                .map_err(|e| Failure::runtime(format!("encoding generator spec: {e}")))?;
            std::fs::write(&sidecar, json + "\n")
                .map_err(|e| Failure::runtime(format!("writing {}: {e}", sidecar.display())))?;
            log::info!("wrote {} values to {}", series.len(), path.display());
        }
    }
    Ok(())
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn read_series(path: &Path) -> Result<TimeSeries, Failure> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("reading {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (lineno, raw) in content.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Failure::usage(format!("{}:{}: not a number: {line:?}", path.display(), lineno + 1))
        })?;
        values.push(v);
    }
    if values.len() < 3 {
        return Err(Failure::usage(format!(
            "{}: need at least 3 values, found {}",
            path.display(),
            values.len()
        )));
    }
    TimeSeries::new(values).map_err(Failure::from_error)
}

fn run_tested(args: &TestArgs) -> Result<(), Failure> {
    let series = read_series(&args.input)?;
    let config = TestConfig {
        kernel: KernelSpec::uniform(args.bandwidth),
        block_length: args.block_length,
        bootstrap_iterations: args.bootstrap_iters,
        grid: GridSpec::Quantile { lower: 0.01, upper: 0.99, points: args.grid_points },
        alphas: descending(&args.alphas),
        refit: !args.no_refit,
        seed: args.seed,
    };
    config.validate(series.len()).map_err(Failure::from_error)?;
    let outcome =
        run_test(&series, &MeanFamily::scaled_abs(), &config).map_err(Failure::from_error)?;
    match args.format {
        Format::Json => {
            let json = serde_json::to_string_pretty(&outcome)
                .map_err(|e| Failure::runtime(format!("encoding outcome: {e}")))?;
            println!("{json}");
        }
        Format::Text => {
            println!("observations: {}", series.len());
            println!("theta_hat:    {:.6}", outcome.theta_hat);
            println!("statistic:    {:.6}", outcome.statistic);
            for (&(alpha, critical), &(_, reject)) in
                outcome.critical_values.iter().zip(&outcome.decisions)
            {
                let verdict = if reject { "reject" } else { "retain" };
                println!("alpha {alpha:<5}: critical {critical:.6}  {verdict}");
            }
        }
    }
    Ok(())
}

fn descending(alphas: &[f64]) -> Vec<f64> {
    let mut sorted = alphas.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    sorted
}

fn run_experiments(args: &ExperimentArgs) -> Result<(), Failure> {
    let json = std::fs::read_to_string(&args.plan)
        .map_err(|e| Failure::usage(format!("reading {}: {e}", args.plan.display())))?;
    let mut plans = plan::parse(&json).map_err(Failure::from_error)?;
    if let Some(reps) = args.replications {
        for p in &mut plans {
            p.replications = reps;
            p.validate().map_err(Failure::from_error)?;
        }
    }
    let outcomes = run_table(&plans);
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (p, outcome) in plans.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push(format!("{}: {e}", p.label)),
        }
    }
    let csv = results_to_csv(&results);
    match &args.output {
        None => print!("{csv}"),
        Some(prefix) => {
            let csv_path = prefix.with_extension("csv");
            let json_path = prefix.with_extension("json");
            std::fs::write(&csv_path, &csv)
                .map_err(|e| Failure::runtime(format!("writing {}: {e}", csv_path.display())))?;
            let body = results_to_json(&results).map_err(Failure::from_error)?;
            std::fs::write(&json_path, body + "\n")
                .map_err(|e| Failure::runtime(format!("writing {}: {e}", json_path.display())))?;
            log::info!("wrote {} and {}", csv_path.display(), json_path.display());
        }
    }
    if !failures.is_empty() {
        return Err(Failure::runtime(format!(
            "{} of {} experiments failed: {}",
            failures.len(),
            plans.len(),
            failures.join("; ")
        )));
    }
    Ok(())
}
