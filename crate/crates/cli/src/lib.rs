//! Experiment runner: analytic and simulated sweeps, optimizer tables and
//! baseline comparisons written as CSV.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod settings;

pub use commands::{execute, Artifact};
pub use settings::{example_map, Defaults, Settings};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "DSCSMA_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("solver failure: {0}")]
    Solver(#[from] dscsma::Error),
    #[error("output encoding failed: {0}")]
    Encode(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Solver(_) => 4,
            CliError::Encode(_) => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Independent TCPairs.
    Pairs,
    /// TCPairs taken from a partner map.
    Stations,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pairs => "pairs",
            Mode::Stations => "stations",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "pairs" => Some(Mode::Pairs),
            "stations" => Some(Mode::Stations),
            _ => None,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dscsma",
    version,
    about = "Double-station CSMA/CA experiment runner"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Model operating point for every grid point.
    Analytic,
    /// Replicated simulation for every grid point.
    Simulate,
    /// Throughput-optimal initial window for each N.
    OptimizeW0,
    /// Throughput-optimal pair count for each W0.
    OptimizeN,
    /// Degree-balanced partner map from a connectivity matrix.
    OptimizeMap,
    /// Model, simulation and conventional CSMA/CA side by side.
    Compare,
    /// Both optimizers on the published table inputs.
    ReproduceTable5,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analytic => "analytic",
            Command::Simulate => "simulate",
            Command::OptimizeW0 => "optimize-w0",
            Command::OptimizeN => "optimize-n",
            Command::OptimizeMap => "optimize-map",
            Command::Compare => "compare",
            Command::ReproduceTable5 => "reproduce-table5",
        }
    }

    fn defaults(self) -> Defaults {
        match self {
            Command::OptimizeW0 => Defaults {
                w0: &settings::DEFAULT_W0,
                n: &settings::TABLE5_N,
            },
            Command::OptimizeN => Defaults {
                w0: &settings::TABLE5_W0,
                n: &settings::DEFAULT_N,
            },
            _ => Defaults::STANDARD,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Initial windows, comma separated.
    #[arg(long, global = true, value_name = "LIST")]
    pub w0: Option<String>,
    /// Pair counts, comma separated.
    #[arg(long, global = true, value_name = "LIST")]
    pub n: Option<String>,
    /// Backoff stage counts, comma separated.
    #[arg(long, global = true, value_name = "LIST")]
    pub m: Option<String>,
    /// Config file with timings, grid keys and matrices.
    #[arg(long, global = true, alias = "config", value_name = "FILE")]
    pub timings: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub reps: Option<u64>,
    /// Slots per replication.
    #[arg(long, global = true)]
    pub horizon: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Probability a partner declines (stations mode).
    #[arg(long, global = true)]
    pub refuse_prob: Option<f64>,
    /// Number of nonzero entries the optimized partner map keeps.
    #[arg(long, global = true)]
    pub target: Option<u64>,
    /// Keep one map per greedy level.
    #[arg(long, global = true)]
    pub first_only: bool,
    #[arg(long, global = true)]
    pub frontier_cap: Option<u64>,
    /// Symbols per second; adds absolute throughput columns.
    #[arg(long, global = true)]
    pub symbol_rate: Option<f64>,
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse()
            .ok()
            .filter(|n: &usize| *n > 0)
            .map(Some)
            .ok_or_else(|| {
                CliError::Config(format!("{THREADS_ENV}='{v}' is not a positive integer"))
            }),
    }
}

/// Resolves the configuration, computes every artifact, then writes them.
/// Nothing is written unless all computation succeeded. Worker count comes
/// from `DSCSMA_THREADS` when set.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    run_with_threads(cli, threads_from_env()?)
}

/// As [`run`] with an explicit worker count; `None` uses rayon's default.
pub fn run_with_threads(cli: &Cli, threads: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let settings = Settings::resolve(&cli.common, &cli.command.defaults())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let artifacts = pool.install(|| execute(cli.command, &settings))?;
    write_artifacts(&settings.out, &artifacts)
}

fn write_artifacts(
    dir: &std::path::Path,
    artifacts: &[Artifact],
) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}
