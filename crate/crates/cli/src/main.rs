//! `tore`: simulate event streams, render TORE volumes and patches, compute
//! baseline representations, benchmark and verify.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or validation error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] tore_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("verification failed")]
    VerifyFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::VerifyFailed => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tore",
    version,
    about = "Time-ordered recent event volumes for event cameras"
)]
pub struct Cli {
    /// Overwrite existing outputs and manifests.
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate events from an analytic log-intensity signal.
    Simulate(SimulateArgs),
    /// Render full-frame volumes at chosen query times.
    Render(RenderArgs),
    /// Render m x m patches around selected events.
    Patch(PatchArgs),
    /// Compute a windowed baseline representation.
    Baseline(BaselineArgs),
    /// Time ingestion, rendering and baselines.
    Bench(BenchArgs),
    /// Run the randomized oracle checks.
    Verify(VerifyArgs),
    /// Re-run the command recorded in a manifest.
    Rerun { manifest: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CsvPolarity {
    Binary,
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Reject,
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F64,
    F32,
}

/// Event input: binary `.evt` files, or `.csv` with `t,x,y,p` lines.
#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Polarity encoding of CSV input.
    #[arg(long, value_enum, default_value = "binary")]
    pub csv_polarity: CsvPolarity,
    /// Sensor size WIDTHxHEIGHT for CSV input (inferred when omitted).
    #[arg(long)]
    pub size: Option<String>,
    /// Handling of timestamps that run backwards.
    #[arg(long, value_enum, default_value = "reject")]
    pub policy: Policy,
}

#[derive(Debug, Args)]
pub struct ToreArgs {
    #[arg(long = "tau-us", default_value_t = 5_000_000)]
    pub tau_us: u64,
    #[arg(long = "tau-prime-us", default_value_t = 150)]
    pub tau_prime_us: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// ramp, sinusoid, steps or constant.
    #[arg(long, default_value = "ramp")]
    pub signal: String,
    /// Ramp slope, log-intensity per us.
    #[arg(long, default_value_t = 0.001, allow_hyphen_values = true)]
    pub slope: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub offset: f64,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long = "period-us", default_value_t = 1000.0)]
    pub period_us: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phase: f64,
    /// Step train as `t_us:height,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub steps: Option<String>,
    /// Contrast threshold.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long = "t-start-us", default_value_t = 0)]
    pub t_start_us: u64,
    /// Duration after the start time, in us.
    #[arg(long = "dur-us", visible_alias = "dur", default_value_t = 1_000_000)]
    pub dur_us: u64,
    #[arg(long = "tick-us", default_value_t = 1)]
    pub tick_us: u64,
    #[arg(long, default_value = "1x1")]
    pub size: String,
    /// Extra uniformly random noise events.
    #[arg(long, default_value_t = 0)]
    pub noise_events: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; `.csv` writes CSV, anything else the binary format.
    #[arg(short, long, default_value = "events.evt")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Query time in us; repeatable, must be non-decreasing.
    #[arg(long = "at-us", visible_alias = "at")]
    pub at_us: Vec<u64>,
    /// Frame rate for a regular query grid.
    #[arg(long = "rate-hz", visible_alias = "rate")]
    pub rate_hz: Option<f64>,
    /// Grid span `t0:t1` in us, used with --rate-hz.
    #[arg(long = "span-us", visible_alias = "span")]
    pub span_us: Option<String>,
    #[arg(long, short = 'k', default_value_t = 4)]
    pub k: usize,
    #[command(flatten)]
    pub tore: ToreArgs,
    /// Skip the tau / tau' clamps.
    #[arg(long)]
    pub unclamped: bool,
    #[arg(long, value_enum, default_value = "f64")]
    pub dtype: DtypeArg,
    #[arg(long, default_value = "volumes")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PatchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Patch side, odd.
    #[arg(long, short = 'm', default_value_t = 9)]
    pub m: usize,
    #[arg(long, short = 'k', default_value_t = 7)]
    pub k: usize,
    #[command(flatten)]
    pub tore: ToreArgs,
    /// Event index; repeatable.
    #[arg(long)]
    pub index: Vec<usize>,
    /// Half-open index range `a:b`.
    #[arg(long)]
    pub range: Option<String>,
    /// Take each patch before its own event is inserted.
    #[arg(long)]
    pub exclude_self: bool,
    #[arg(long, value_enum, default_value = "f64")]
    pub dtype: DtypeArg,
    #[arg(long, default_value = "patches")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Representation {
    Frame,
    Count,
    Sae,
    Voxel,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(value_enum)]
    pub representation: Representation,
    #[command(flatten)]
    pub input: InputArgs,
    /// Window length in us (frame, count, voxel).
    #[arg(long = "window-us", visible_alias = "window")]
    pub window_us: Option<u64>,
    /// Window end (inclusive) in us.
    #[arg(long = "end-us", visible_alias = "end")]
    pub end_us: u64,
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    /// SAE value for cells that never fired.
    #[arg(long, default_value_t = 0)]
    pub sentinel: u64,
    #[arg(long, value_enum, default_value = "f64")]
    pub dtype: DtypeArg,
    #[arg(short, long, default_value = "baseline.tor")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Event file to benchmark on instead of a synthetic stream.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub events: usize,
    #[arg(long, default_value = "346x260")]
    pub size: String,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 7)]
    pub ingest_k: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,4,7,16")]
    pub k_sweep: Vec<usize>,
    #[arg(long = "window-us", default_value_t = 50_000)]
    pub window_us: u64,
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV report path; printed to stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub cases: usize,
    #[arg(long, default_value = "32x32")]
    pub size: String,
    #[arg(long, default_value_t = 20_000)]
    pub events: usize,
    /// Also write the report to this file.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Render one microsecond late to exercise the failure path.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let cli = Cli::try_parse_from(std::iter::once("tore".to_string()).chain(args.iter().cloned())).map_err(|e| {
        // help and version are not errors
        if !e.use_stderr() {
            let _ = e.print();
            std::process::exit(0);
        }
        CliError::Usage(e.render().to_string())
    })?;
    // manifests record the invocation without --force so reruns stay identical
    let recorded: Vec<String> = args.into_iter().filter(|a| a != "--force").collect();
    commands::dispatch(cli, &recorded)
}

fn main() -> ExitCode {
    match run(std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::VerifyFailed) => ExitCode::from(1),
        Err(err) => {
            let text = err.to_string();
            eprintln!("{}", text.trim_end());
            ExitCode::from(err.exit_code())
        }
    }
}
