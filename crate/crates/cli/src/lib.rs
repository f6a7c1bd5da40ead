//! Command-line front end for the strategic-regression simulator.
//!
//! Three subcommands drive the library:
//!
//! - `run` — one closed-loop simulation, written as a run-record JSON file,
//!   optionally with a per-epoch CSV summary;
//! - `sweep` — a seeded grid of runs over {n, α, T, σ}, one CSV row per
//!   (grid point, seed), reproducible under any worker-pool size;
//! - `diagnose` — instance constants, recovery thresholds, and an empirical
//!   concentration report for a scenario.
//!
//! Every output is deterministic given the command line: per-run seeds
//! derive from the master seed by a counter-based splitmix64, each worker
//! owns its run's RNG stream, and sweep rows are written in run-index
//! order no matter how many workers ran them (`STRATREG_THREADS` caps the
//! pool). The JSON outputs carry a single impure field, `timestamp`
//! (unix seconds), which `--no-timestamp` suppresses.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use stratreg_core::agents::AgentTieRule;
use stratreg_core::learner::{run_dynamics, LearnerConfig, LseTieRule, RunRecord};
use stratreg_core::metrics::{concentration_report, ConcentrationReport};
use stratreg_core::scenarios::{
    alpha_threshold, build_example, epoch_size_threshold, instance_constants, InstanceConstants,
    NoiseKind, Scenario,
};

// ----------------------------------------------------------------------
// errors and exit codes
// ----------------------------------------------------------------------

/// Command failures, split by exit code: bad requests exit 2, failures
/// while carrying out a well-formed request exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<stratreg_core::Error> for CliError {
    fn from(e: stratreg_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

// ----------------------------------------------------------------------
// argument surface
// ----------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "stratreg",
    version,
    about = "Simulate online least-squares regression against strategic agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its record as JSON
    Run(RunArgs),
    /// Run a seeded parameter grid and write one CSV row per run
    Sweep(SweepArgs),
    /// Report instance constants, thresholds, and concentration checks
    Diagnose(DiagnoseArgs),
}

/// Refit rule, as spelled on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// minimum-norm least-squares refit
    #[value(name = "min-norm")]
    MinNorm,
    /// exploration tie-breaking refit (bump of size alpha)
    #[value(name = "algorithm2")]
    Algorithm2,
}

impl From<Mode> for LseTieRule {
    fn from(m: Mode) -> Self {
        match m {
            Mode::MinNorm => LseTieRule::MinNorm,
            Mode::Algorithm2 => LseTieRule::Algorithm2,
        }
    }
}

/// Where the scenario comes from. Exactly one of the two flags.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ScenarioSource {
    /// built-in worked example (1-4)
    #[arg(long, value_name = "ID", value_parser = clap::value_parser!(u32).range(1..=4))]
    pub example: Option<u32>,
    /// scenario JSON file
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
}

impl ScenarioSource {
    fn load(&self) -> Result<(Scenario, Option<Vec<f64>>), CliError> {
        load_source(self.example, self.scenario.as_deref())
    }
}

/// Loads a scenario plus, for built-in examples, the starting model the
/// worked example assumes.
fn load_source(
    example: Option<u32>,
    scenario: Option<&Path>,
) -> Result<(Scenario, Option<Vec<f64>>), CliError> {
    match (example, scenario) {
        (Some(id), None) => {
            let ex = build_example(id).map_err(|e| usage(e.to_string()))?;
            Ok((ex.scenario, Some(ex.beta0)))
        }
        (None, Some(path)) => Ok((Scenario::load(path)?, None)),
        (Some(_), Some(_)) => Err(usage("give exactly one of --example and --scenario")),
        (None, None) => Err(usage(
            "a scenario source is required: --example <ID> or --scenario <FILE>",
        )),
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: ScenarioSource,
    /// number of epochs
    #[arg(long, value_name = "E", value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub epochs: usize,
    /// agents per epoch n
    #[arg(long, value_name = "N", value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub epoch_size: usize,
    /// exploration magnitude (used by algorithm2 mode)
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// run seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// refit rule
    #[arg(long, value_enum, default_value_t = Mode::MinNorm)]
    pub mode: Mode,
    /// output path for the run-record JSON
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// also write a per-epoch CSV summary here
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// retain the full observation log in the record
    #[arg(long)]
    pub keep_observations: bool,
    /// omit the timestamp field from the JSON output
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: SweepScenarioSource,
    /// sweep spec JSON file (alternative to the grid flags)
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with_all = ["sweep_source", "n", "alpha", "horizon", "sigma",
                              "seeds", "master_seed", "mode"]
    )]
    pub spec: Option<PathBuf>,
    /// epoch-size grid, comma separated
    #[arg(long, value_name = "N,..", value_delimiter = ',',
          value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub n: Vec<usize>,
    /// exploration-magnitude grid, comma separated
    #[arg(long, value_name = "A,..", value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// horizon grid T, comma separated (a run executes max(1, T/n) epochs)
    #[arg(long, short = 'T', value_name = "T,..", value_delimiter = ',',
          value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub horizon: Vec<usize>,
    /// noise-scale grid, comma separated; defaults to the scenario's sigma
    #[arg(long, value_name = "S,..", value_delimiter = ',')]
    pub sigma: Vec<f64>,
    /// seeds per grid point
    #[arg(long, value_name = "COUNT")]
    pub seeds: Option<usize>,
    /// master seed; per-run seeds derive from it by run index
    #[arg(long, default_value_t = 0)]
    pub master_seed: u64,
    /// refit rule for every run
    #[arg(long, value_enum, default_value_t = Mode::MinNorm)]
    pub mode: Mode,
    /// output CSV path (overrides the spec file's `out`)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Scenario flags for `sweep`: optional here because a spec file may carry
/// the source instead; `cmd_sweep` checks that exactly one side does.
#[derive(Debug, Args)]
#[group(id = "sweep_source", multiple = false)]
pub struct SweepScenarioSource {
    /// built-in worked example (1-4)
    #[arg(long, value_name = "ID", value_parser = clap::value_parser!(u32).range(1..=4))]
    pub example: Option<u32>,
    /// scenario JSON file
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub source: ScenarioSource,
    /// failure probability delta for all bounds
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// horizon T entering the thresholds
    #[arg(long, short = 'T', default_value_t = 1000,
          value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub horizon: usize,
    /// epoch size n entering the thresholds and the fresh run
    #[arg(long, value_name = "N", default_value_t = 100,
          value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub epoch_size: usize,
    /// override the scenario's noise scale (a zero-noise scenario gets
    /// uniform noise when raised above zero)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// refit rule for the fresh run
    #[arg(long, value_enum, default_value_t = Mode::MinNorm)]
    pub mode: Mode,
    /// exploration magnitude for the fresh run
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// seed of the fresh run
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// also write the full report as JSON here
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// omit the timestamp field from the JSON output
    #[arg(long)]
    pub no_timestamp: bool,
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    }
}

// ----------------------------------------------------------------------
// seed derivation
// ----------------------------------------------------------------------

/// Per-run seed for sweep row `run_id` under `master_seed`:
/// splitmix64(master_seed + (run_id + 1) · 0x9E3779B97F4A7C15), the
/// standard finalizer with the golden-ratio increment. Counter-based, so
/// any worker can compute its own seed without shared state.
pub fn derive_run_seed(master_seed: u64, run_id: u64) -> u64 {
    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut z = master_seed.wrapping_add(GOLDEN.wrapping_mul(run_id.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ----------------------------------------------------------------------
// shared output plumbing
// ----------------------------------------------------------------------

/// Unix timestamp, or `None` when suppressed.
fn stamp(no_timestamp: bool) -> Option<u64> {
    if no_timestamp {
        None
    } else {
        Some(
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .unwrap_or_default()
                .as_secs(),
        )
    }
}

/// Run record plus the optional timestamp, flattened so that with the
/// timestamp suppressed the file is exactly the record's own JSON.
#[derive(Serialize)]
struct RunOutput<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
    #[serde(flatten)]
    record: &'a RunRecord,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

// ----------------------------------------------------------------------
// run
// ----------------------------------------------------------------------

/// Per-epoch CSV summary columns, in order:
/// `E,tau,err_D,err_full,rank_U,min_eig_V,D,beta_hat`, with `D` the
/// space-joined modified features (0-based) and `beta_hat` the
/// space-joined estimate.
fn write_epoch_csv(path: &Path, run: &RunRecord) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "E",
        "tau",
        "err_D",
        "err_full",
        "rank_U",
        "min_eig_V",
        "D",
        "beta_hat",
    ])?;
    for rec in &run.epochs {
        let d_set = rec
            .d_set
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let beta = rec
            .beta_hat
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            rec.e.to_string(),
            rec.tau.to_string(),
            rec.err_d.to_string(),
            rec.err_full.to_string(),
            rec.rank_u.to_string(),
            rec.min_eig_v.to_string(),
            d_set,
            beta,
        ])?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let (scenario, example_beta0) = args.source.load()?;
    let config = LearnerConfig {
        epoch_size: args.epoch_size,
        num_epochs: args.epochs,
        alpha: args.alpha,
        beta0: example_beta0,
        lse_tie_rule: args.mode.into(),
        agent_tie_rule: AgentTieRule::default(),
        seed: args.seed,
        keep_observations: args.keep_observations,
    };
    let run = run_dynamics(&scenario, &config)?;
    write_json(
        &args.out,
        &RunOutput {
            timestamp: stamp(args.no_timestamp),
            record: &run,
        },
    )?;
    if let Some(csv_path) = &args.csv {
        write_epoch_csv(csv_path, &run)?;
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

// ----------------------------------------------------------------------
// sweep
// ----------------------------------------------------------------------

/// A sweep: scenario source, grids over {n, alpha, T, sigma}, and a seed
/// count. Runs every grid point with `seeds` derived seeds; row order and
/// content depend only on this spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// built-in worked example (1-4)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<u32>,
    /// scenario JSON file
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
    /// epoch-size grid
    pub n: Vec<usize>,
    /// exploration-magnitude grid
    pub alpha: Vec<f64>,
    /// horizon grid
    #[serde(rename = "T")]
    pub horizon: Vec<usize>,
    /// noise-scale grid; `None` means the scenario's own sigma
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    /// seeds per grid point
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub mode: LseTieRule,
    /// output CSV path; the --out flag overrides it
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl SweepSpec {
    fn from_args(args: &SweepArgs) -> Result<Self, CliError> {
        let seeds = args
            .seeds
            .ok_or_else(|| usage("--seeds is required (or use --spec)"))?;
        Ok(SweepSpec {
            example: args.source.example,
            scenario: args.source.scenario.clone(),
            n: args.n.clone(),
            alpha: args.alpha.clone(),
            horizon: args.horizon.clone(),
            sigma: if args.sigma.is_empty() {
                None
            } else {
                Some(args.sigma.clone())
            },
            seeds,
            master_seed: args.master_seed,
            mode: args.mode.into(),
            out: args.out.clone(),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.example.is_some() == self.scenario.is_some() {
            return Err(usage(
                "a sweep needs exactly one scenario source (example or scenario)",
            ));
        }
        if self.n.is_empty() || self.alpha.is_empty() || self.horizon.is_empty() {
            return Err(usage(
                "every sweep grid (--n, --alpha, --horizon) must be nonempty",
            ));
        }
        if self.n.contains(&0) || self.horizon.contains(&0) {
            return Err(usage("grid values for n and T must be >= 1"));
        }
        if self.alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(usage("alpha grid values must be finite and >= 0"));
        }
        if let Some(sigmas) = &self.sigma {
            if sigmas.is_empty() {
                return Err(usage("the sigma grid, when given, must be nonempty"));
            }
            if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(usage("sigma grid values must be finite and >= 0"));
            }
        }
        if self.seeds == 0 {
            return Err(usage("seeds must be >= 1"));
        }
        Ok(())
    }
}

/// One row of the sweep CSV; column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub run_id: u64,
    pub n: usize,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub sigma: f64,
    pub seed: u64,
    #[serde(rename = "final_err_D")]
    pub final_err_d: f64,
    pub final_err_full: f64,
    /// |D| at the end of the run
    pub d_covered: usize,
    /// first epoch with |D| = d, or 0 if never reached
    pub epochs_to_full_coverage: u64,
}

/// One grid point × seed, with its derived seed and position.
#[derive(Debug, Clone)]
struct RunPoint {
    run_id: u64,
    n: usize,
    alpha: f64,
    horizon: usize,
    sigma: f64,
    seed: u64,
}

/// Grid expansion in row order: n, then alpha, then T, then sigma, then
/// seed index; `run_id` counts rows from 0 in exactly this order.
fn expand_grid(spec: &SweepSpec, scenario_sigma: f64) -> Vec<RunPoint> {
    let sigmas = spec.sigma.clone().unwrap_or_else(|| vec![scenario_sigma]);
    let mut points = Vec::with_capacity(
        spec.n.len() * spec.alpha.len() * spec.horizon.len() * sigmas.len() * spec.seeds,
    );
    let mut run_id = 0u64;
    for &n in &spec.n {
        for &alpha in &spec.alpha {
            for &horizon in &spec.horizon {
                for &sigma in &sigmas {
                    for _ in 0..spec.seeds {
                        points.push(RunPoint {
                            run_id,
                            n,
                            alpha,
                            horizon,
                            sigma,
                            seed: derive_run_seed(spec.master_seed, run_id),
                        });
                        run_id += 1;
                    }
                }
            }
        }
    }
    points
}

/// Executes one sweep run and reduces it to its CSV row.
fn sweep_row(
    scenario: &Scenario,
    beta0: &Option<Vec<f64>>,
    mode: LseTieRule,
    p: &RunPoint,
) -> Result<SweepRow, CliError> {
    let mut s = scenario.clone();
    s.model.sigma = p.sigma;
    if p.sigma > 0.0 && s.model.noise_kind == NoiseKind::Zero {
        s.model.noise_kind = NoiseKind::Uniform;
    }
    let config = LearnerConfig {
        epoch_size: p.n,
        // whole epochs only: T rounds amount to max(1, T/n) epochs
        num_epochs: (p.horizon / p.n).max(1),
        alpha: p.alpha,
        beta0: beta0.clone(),
        lse_tie_rule: mode,
        agent_tie_rule: AgentTieRule::default(),
        seed: p.seed,
        keep_observations: false,
    };
    let run = run_dynamics(&s, &config)?;
    let d = s.dim();
    let last = run
        .epochs
        .last()
        .ok_or_else(|| CliError::Runtime("run produced no epochs".into()))?;
    let coverage = run
        .epochs
        .iter()
        .find(|e| e.d_set.len() == d)
        .map(|e| e.e as u64)
        .unwrap_or(0);
    Ok(SweepRow {
        run_id: p.run_id,
        n: p.n,
        alpha: p.alpha,
        horizon: p.horizon,
        sigma: p.sigma,
        seed: p.seed,
        final_err_d: last.err_d,
        final_err_full: last.err_full,
        d_covered: last.d_set.len(),
        epochs_to_full_coverage: coverage,
    })
}

/// Builds the worker pool, sized by `STRATREG_THREADS` when set.
fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("STRATREG_THREADS") {
        let threads: usize = raw.trim().parse().ok().filter(|k| *k >= 1).ok_or_else(|| {
            usage(format!(
                "STRATREG_THREADS must be a positive integer, got {raw:?}"
            ))
        })?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Runs the whole grid. Workers process points in parallel; the collected
/// rows come back in run-index order, so the CSV bytes do not depend on
/// the pool size.
pub fn execute_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, CliError> {
    spec.validate()?;
    let (scenario, beta0) = load_source(spec.example, spec.scenario.as_deref())?;
    let points = expand_grid(spec, scenario.model.sigma);
    let pool = thread_pool()?;
    pool.install(|| {
        points
            .par_iter()
            .map(|p| sweep_row(&scenario, &beta0, spec.mode, p))
            .collect()
    })
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let spec = if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str::<SweepSpec>(&text)
            .map_err(|e| usage(format!("invalid sweep spec {}: {e}", path.display())))?
    } else {
        SweepSpec::from_args(args)?
    };
    let out = args
        .out
        .clone()
        .or_else(|| spec.out.clone())
        .ok_or_else(|| usage("an output CSV path is required (--out or the spec's `out`)"))?;
    let rows = execute_sweep(&spec)?;
    write_sweep_csv(&out, &rows)?;
    println!("wrote {} ({} rows)", out.display(), rows.len());
    Ok(())
}

// ----------------------------------------------------------------------
// diagnose
// ----------------------------------------------------------------------

/// Everything `diagnose` reports, in one serializable bundle.
#[derive(Debug, Serialize)]
pub struct DiagnoseReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    pub scenario: String,
    pub d: usize,
    pub delta: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub epoch_size: usize,
    pub constants: InstanceConstants,
    pub alpha_threshold: f64,
    pub epoch_size_threshold: f64,
    /// recovery-error bound K·sqrt(2dT·ln(8d/delta)) / (lambda·n)
    pub recovery_bound: f64,
    pub concentration: ConcentrationReport,
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<(), CliError> {
    if let Some(sigma) = args.sigma {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(usage(format!(
                "--sigma must be finite and >= 0, got {sigma}"
            )));
        }
    }
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(usage(format!(
            "--delta must lie in (0,1), got {}",
            args.delta
        )));
    }

    let (mut scenario, example_beta0) = args.source.load()?;
    if let Some(sigma) = args.sigma {
        scenario.model.sigma = sigma;
        if sigma > 0.0 && scenario.model.noise_kind == NoiseKind::Zero {
            scenario.model.noise_kind = NoiseKind::Uniform;
        }
    }

    let d = scenario.dim();
    let consts = instance_constants(&scenario)?;
    let a_star = alpha_threshold(&consts, d, args.horizon, args.epoch_size, args.delta)?;
    let n_star = epoch_size_threshold(&consts, d, args.horizon, args.delta)?;
    let log_term = (8.0 * d as f64 / args.delta).ln();
    let recovery_bound = consts.k_big * (2.0 * d as f64 * args.horizon as f64 * log_term).sqrt()
        / (consts.lambda * args.epoch_size as f64);

    // fresh run with the observation log retained for the empirical checks
    let config = LearnerConfig {
        epoch_size: args.epoch_size,
        num_epochs: (args.horizon / args.epoch_size).max(1),
        alpha: args.alpha,
        beta0: example_beta0,
        lse_tie_rule: args.mode.into(),
        agent_tie_rule: AgentTieRule::default(),
        seed: args.seed,
        keep_observations: true,
    };
    let run = run_dynamics(&scenario, &config)?;
    let concentration = concentration_report(&run, &scenario, &consts, args.delta)?;
    let report = DiagnoseReport {
        timestamp: stamp(args.no_timestamp),
        scenario: scenario.name.clone(),
        d,
        delta: args.delta,
        horizon: args.horizon,
        epoch_size: args.epoch_size,
        constants: consts,
        alpha_threshold: a_star,
        epoch_size_threshold: n_star,
        recovery_bound,
        concentration,
    };
    // write the report before the summary so a closed stdout pipe cannot
    // swallow it
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }

    println!(
        "scenario {}: d = {}, sigma = {}, noise = {}",
        scenario.name,
        d,
        scenario.model.sigma,
        match scenario.model.noise_kind {
            NoiseKind::Uniform => "uniform",
            NoiseKind::TruncatedGaussian => "truncated_gaussian",
            NoiseKind::Zero => "zero",
        }
    );
    println!("K' = {}", report.constants.k_prime);
    println!("K = {}", report.constants.k_big);
    println!("lambda_Sigma = {}", report.constants.lambda_sigma);
    println!("lambda_r = {}", report.constants.lambda_r);
    println!("lambda = {}", report.constants.lambda);
    println!("gamma = {}", report.constants.gamma);
    println!("kappa = {}", report.constants.kappa);
    println!("max_ratio = {}", report.constants.max_ratio);
    println!(
        "alpha_threshold (T = {}, n = {}, delta = {}) = {}",
        args.horizon, args.epoch_size, args.delta, a_star
    );
    println!(
        "epoch_size_threshold (T = {}, delta = {}) = {}",
        args.horizon, args.delta, n_star
    );
    println!(
        "recovery_bound (T = {}, n = {}, delta = {}) = {}",
        args.horizon, args.epoch_size, args.delta, recovery_bound
    );
    let passed = report
        .concentration
        .checks
        .iter()
        .filter(|c| c.pass)
        .count();
    println!(
        "concentration checks (tau = {}): {} of {} pass",
        report.concentration.tau,
        passed,
        report.concentration.checks.len()
    );
    for check in &report.concentration.checks {
        println!(
            "  {}: statistic {} vs bound {} : {}",
            check.check,
            check.statistic,
            check.bound,
            if check.pass { "pass" } else { "FAIL" }
        );
    }
    if let Some(out) = &args.out {
        println!("wrote {}", out.display());
    }
    Ok(())
}

// ----------------------------------------------------------------------
// tests
// ----------------------------------------------------------------------
