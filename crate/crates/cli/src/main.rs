//! `crewfolio` command-line entry point.
//!
//! Exit codes: 0 success, 1 domain failure (stage, checker or metrics), 2
//! usage or I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crewfolio::pipeline::CrewId;

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "crewfolio",
    version,
    about = "Deterministic crew portfolio pipeline"
)]
struct Cli {
    /// Flat `key = value` config file; flags and environment override it.
    #[arg(long, global = true, env = "CREWFOLIO_CONFIG")]
    config: Option<PathBuf>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run crew A (static) or B (rolling) end to end.
    Run(RunArgs),
    /// Side-by-side metrics of two finished runs.
    Compare { run_a: PathBuf, run_b: PathBuf },
    /// Verify digests, schemas and cross-stage coherence of a run.
    Check { run: PathBuf },
    /// Compare a run's test-period portfolio with a single-asset benchmark.
    Benchmark {
        run: PathBuf,
        /// Benchmark price CSV; falls back to `benchmark` in the config file.
        file: Option<PathBuf>,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Individual stages on raw files.
    #[command(subcommand)]
    Tools(Tool),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CrewArg {
    A,
    B,
}

impl From<CrewArg> for CrewId {
    fn from(c: CrewArg) -> Self {
        match c {
            CrewArg::A => CrewId::A,
            CrewArg::B => CrewId::B,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(value_enum)]
    crew: CrewArg,
    /// Price CSV with a `date` column and one column per asset.
    #[arg(long, env = "CREWFOLIO_DATA")]
    data: Option<PathBuf>,
    /// Run directory; created if missing, resumed if it holds a manifest.
    #[arg(long, env = "CREWFOLIO_OUT")]
    out: Option<PathBuf>,
    /// Training fraction of the cleaned price rows.
    #[arg(long, env = "CREWFOLIO_SPLIT")]
    split: Option<f64>,
    #[command(flatten)]
    rolling: RollingArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Relative margin for degradation flags.
    #[arg(long, env = "CREWFOLIO_MARGIN")]
    margin: Option<f64>,
}

#[derive(Debug, Args)]
struct RollingArgs {
    /// Estimation window in rows.
    #[arg(long, env = "CREWFOLIO_WINDOW")]
    window: Option<usize>,
    /// Rows each rolling allocation is held.
    #[arg(long, env = "CREWFOLIO_HOLDING")]
    holding: Option<usize>,
}

#[derive(Debug, Args)]
struct MetricArgs {
    /// Annualised risk-free rate.
    #[arg(long, env = "CREWFOLIO_RISK_FREE")]
    risk_free: Option<f64>,
    /// Return periods per year.
    #[arg(long, env = "CREWFOLIO_PERIODS")]
    periods: Option<u32>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, env = "CREWFOLIO_SEED")]
    seed: Option<u64>,
    /// Optimiser start points.
    #[arg(long, env = "CREWFOLIO_RESTARTS")]
    restarts: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Tool {
    /// Clean and split a price file into `train.csv` and `test.csv`.
    Split {
        #[arg(long, env = "CREWFOLIO_DATA")]
        data: Option<PathBuf>,
        #[arg(long, env = "CREWFOLIO_SPLIT")]
        split: Option<f64>,
        /// Output directory.
        #[arg(long, env = "CREWFOLIO_OUT")]
        out: Option<PathBuf>,
    },
    /// Metrics of a weight schedule (equal weights by default) on a price file.
    Metrics {
        #[arg(long, env = "CREWFOLIO_DATA")]
        data: Option<PathBuf>,
        /// Schedule file as written by `tools optimize`.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        metrics: MetricArgs,
    },
    /// Sharpe-maximising weights for a price file.
    Optimize {
        #[arg(long, env = "CREWFOLIO_DATA")]
        data: Option<PathBuf>,
        /// Rolling schedule instead of one static allocation.
        #[arg(long)]
        rolling: bool,
        #[command(flatten)]
        window: RollingArgs,
        #[command(flatten)]
        metrics: MetricArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => return fail(e),
    };
    let verbosity = match file.resolve(Some(cli.verbose).filter(|v| *v > 0), "verbosity", 0u8) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    init_logging(verbosity);
    match commands::dispatch(cli.command, &file) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {}", e.message);
    ExitCode::from(e.code)
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => tracing_subscriber::filter::LevelFilter::WARN,
        1 => tracing_subscriber::filter::LevelFilter::INFO,
        2 => tracing_subscriber::filter::LevelFilter::DEBUG,
        _ => tracing_subscriber::filter::LevelFilter::TRACE,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .without_time()
        .init();
}
