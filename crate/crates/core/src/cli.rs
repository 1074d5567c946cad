//! Command-line front end. Exit codes: 0 success, 2 validation error,
//! 1 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::distgen::{run_univariate, DistError, DistSpec, RunConfig, ShiftSchedule, Trajectory};
use crate::metrics::MeanSd;
use crate::mlp::{MlpError, PlateauCap, TrainConfig};
use crate::pipeline::{run_experiment, DatasetSpec, ExperimentConfig, PipelineError};
use crate::qtree::{TreeError, Xenovert, XenovertConfig};

pub const THREADS_ENV: &str = "XENOVERT_THREADS";
/// Share of the trajectory averaged into the plateau HI.
pub const PLATEAU_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<TreeError> for CliError {
    fn from(e: TreeError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DistError> for CliError {
    fn from(e: DistError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io { .. } | PipelineError::Mlp(MlpError::NonFiniteLoss { .. }) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "xenovert",
    version,
    about = "Quasi-quantile trees for streaming covariate shift"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a univariate distribution shift and record the HI trajectory.
    Univariate(UnivariateArgs),
    /// Compare an MLP on raw vs. Xenovert-quantized features under covariate shift.
    Covariate(CovariateArgs),
    /// Quantize a stream of reals (one per line) from stdin.
    Quantize(QuantizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftArg {
    Instant,
    Gradual,
    Recurring,
}

#[derive(Debug, Clone, Args)]
pub struct TreeArgs {
    /// Tree depth L (2^L intervals).
    #[arg(long, default_value_t = 5)]
    pub levels: u32,
    #[arg(long, default_value_t = 1e-5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    pub theta: f64,
}

impl TreeArgs {
    fn config(&self) -> XenovertConfig {
        XenovertConfig {
            levels: self.levels,
            learning_rate: self.alpha,
            velocity_decay: self.theta,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct UnivariateArgs {
    /// e.g. normal:2,4 | uniform:0,1 | chi2:3 | multimodal:-3,1,0.5;3,1,0.5
    #[arg(long, default_value = "normal:2,4")]
    pub dist_source: String,
    #[arg(long, default_value = "normal:10,2")]
    pub dist_target: String,
    #[arg(long, value_enum, default_value_t = ShiftArg::Instant)]
    pub shift: ShiftArg,
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Draws per phase.
    #[arg(long, default_value_t = 200_000)]
    pub steps: usize,
    /// First seed; runs use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of independent runs.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_HI_WINDOW)]
    pub hi_window: usize,
    #[arg(long, default_value_t = 1_000)]
    pub record_every: usize,
    #[arg(long, default_value = "out/univariate")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CovariateArgs {
    #[arg(long, default_value = "iris")]
    pub dataset: String,
    /// Source CSV for datasets that are not bundled.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Shuffled passes over the training features.
    #[arg(long, default_value_t = 1_000)]
    pub passes: usize,
    /// Shuffled passes over the test features before the scored online pass.
    #[arg(long, default_value_t = 1_000)]
    pub adapt_passes: usize,
    /// Divide interval indices by 2^L before the network.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = 2_000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 200)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Stop after epoch 500 once the loss stops improving.
    #[arg(long)]
    pub plateau_cap: bool,
    #[arg(long, default_value_t = 0.01)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub seeds: usize,
    #[arg(long, default_value = "out/covariate")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct QuantizeArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long, default_value_t = 0.0)]
    pub initial_q: f64,
    /// Resume from a snapshot; tree flags are then ignored.
    #[arg(long)]
    pub snapshot_in: Option<PathBuf>,
    /// Write the final tree state here.
    #[arg(long)]
    pub snapshot_out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code. Errors go to stderr.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let result = match cli.command {
        Command::Univariate(a) => cmd_univariate(&a).map(|_| ()),
        Command::Covariate(a) => cmd_covariate(&a).map(|_| ()),
        Command::Quantize(a) => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            cmd_quantize(&a, stdin.lock(), stdout.lock())
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A second call in the same process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Writes via a sibling temp file and rename so readers never see a
/// partial artifact.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

/// Prefixes a CSV body with a `#` comment line carrying `header` as JSON.
fn with_header<T: Serialize>(header: &T, body: &str) -> String {
    format!("# {}\n{body}", json(header))
}

fn seed_list(first: u64, count: usize) -> Result<Vec<u64>, CliError> {
    if count == 0 {
        return Err(CliError::Validation("--seeds must be at least 1".into()));
    }
    Ok((0..count as u64).map(|i| first.wrapping_add(i)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct UnivariateEcho {
    pub schedule: ShiftSchedule,
    pub shift: ShiftArg,
    pub steps_per_phase: usize,
    pub xenovert: XenovertConfig,
    pub run: RunConfig,
    pub plateau_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnivariateSummary {
    pub config: UnivariateEcho,
    pub seeds: Vec<u64>,
    pub plateau_hi: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub n_seeds: usize,
}

pub fn cmd_univariate(args: &UnivariateArgs) -> Result<UnivariateSummary, CliError> {
    let source: DistSpec = args.dist_source.parse()?;
    let target: DistSpec = args.dist_target.parse()?;
    let schedule = match args.shift {
        ShiftArg::Instant => ShiftSchedule::instant(source, target, args.steps),
        ShiftArg::Gradual => ShiftSchedule::gradual(source, target, args.steps),
        ShiftArg::Recurring => ShiftSchedule::recurring(source, target, args.steps),
    }?;
    let xenovert = args.tree.config();
    xenovert.validate()?;
    let run = RunConfig {
        hi_window: args.hi_window,
        record_every: args.record_every,
    };
    if run.hi_window == 0 || run.record_every == 0 || run.record_every > schedule.horizon {
        return Err(CliError::Validation(format!(
            "need --hi-window > 0 and 0 < --record-every <= {}",
            schedule.horizon
        )));
    }
    let seeds = seed_list(args.seed, args.seeds)?;
    let echo = UnivariateEcho {
        schedule,
        shift: args.shift,
        steps_per_phase: args.steps,
        xenovert,
        run,
        plateau_fraction: PLATEAU_FRACTION,
    };

    let trajectories = seeds
        .par_iter()
        .map(|&seed| {
            let traj = run_univariate(&echo.schedule, xenovert, run, seed)?;
            #[derive(Serialize)]
            struct Header<'a> {
                config: &'a UnivariateEcho,
                seed: u64,
            }
            let path = args.out.join(format!("trajectory_seed{seed}.csv"));
            write_atomic(&path, &with_header(&Header { config: &echo, seed }, &traj.to_csv()))?;
            Ok(traj)
        })
        .collect::<Result<Vec<Trajectory>, CliError>>()?;

    let plateau_hi: Vec<f64> = trajectories
        .iter()
        .map(|t| t.plateau(PLATEAU_FRACTION).expect("validated: at least one point"))
        .collect();
    let stats = MeanSd::of(&plateau_hi).expect("at least one seed");
    let summary = UnivariateSummary {
        config: echo,
        seeds,
        plateau_hi,
        mean: stats.mean,
        sd: stats.sd,
        n_seeds: stats.n,
    };
    write_atomic(
        &args.out.join("summary.json"),
        &serde_json::to_string_pretty(&summary).expect("serializes"),
    )?;
    println!("plateau HI = {stats}; artifacts in {}", args.out.display());
    Ok(summary)
}

pub fn cmd_covariate(args: &CovariateArgs) -> Result<crate::pipeline::ExperimentReport, CliError> {
    let spec = DatasetSpec::builtin(&args.dataset, args.csv.as_deref())?;
    let config = ExperimentConfig {
        xenovert: args.tree.config(),
        passes: args.passes,
        adapt_passes: args.adapt_passes,
        normalize_quantized: args.normalize,
        noise_sigma_frac: args.noise_sigma,
        ..Default::default()
    };
    let train = TrainConfig {
        batch_size: args.batch_size,
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        plateau_cap: args.plateau_cap.then(PlateauCap::default),
    };
    train.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let seeds = seed_list(args.seed, args.seeds)?;
    let report = run_experiment(&spec, &config, &train, &seeds)?;

    write_atomic(
        &args.out.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("serializes"),
    )?;
    #[derive(Serialize)]
    struct Header<'a> {
        dataset: &'a str,
        config: &'a crate::pipeline::ConfigEcho,
        seeds: &'a [u64],
    }
    let header = Header {
        dataset: &report.dataset,
        config: &report.config,
        seeds: &report.seeds,
    };
    write_atomic(
        &args.out.join("per_seed.csv"),
        &with_header(&header, &report.per_seed_csv()),
    )?;
    for arm in &report.arms {
        let stats = MeanSd {
            mean: arm.mean,
            sd: arm.sd,
            n: arm.n_seeds,
        };
        println!("{} {:>13} {} = {stats}", report.dataset, arm.name, arm.metric);
    }
    Ok(report)
}

/// One value per input line: update the tree, then print the interval.
/// Blank lines are skipped.
pub fn cmd_quantize<R: BufRead, W: Write>(args: &QuantizeArgs, input: R, mut output: W) -> Result<(), CliError> {
    let mut tree = match &args.snapshot_in {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            Xenovert::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => Xenovert::grow(XenovertConfig {
            initial_q: args.initial_q,
            ..args.tree.config()
        })?,
    };
    let io_err = |e: std::io::Error| CliError::Runtime(e.to_string());
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let bad = |why: String| CliError::Validation(format!("line {}: {why}", i + 1));
        let x: f64 = trimmed.parse().map_err(|_| bad(format!("not a number: {trimmed:?}")))?;
        let out = tree.update_convert(x).map_err(|e| bad(e.to_string()))?;
        writeln!(output, "{out}").map_err(io_err)?;
    }
    output.flush().map_err(io_err)?;
    if let Some(path) = &args.snapshot_out {
        write_atomic(path, &tree.to_json())?;
    }
    Ok(())
}
