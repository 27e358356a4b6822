//! `matclust`: simulate, fit, select, benchmark and transform three-way data.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numerical
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use matclust_cli::config::{self, BenchmarkArgs, ConfigFile, FitArgs, SelectArgs, SimulateArgs, TransformArgs};
use matclust_cli::{commands, CliError};

#[derive(Debug, Parser)]
#[command(name = "matclust", version, about = "Sparse clustering of three-way data with penalized matrix-normal mixtures")]
struct Cli {
    /// TOML config; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for grid cells and replications (0 = all cores);
    /// defaults to MATCLUST_THREADS
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a dataset from a simulation scenario
    Simulate(SimulateArgs),
    /// Fit one penalized mixture
    Fit(FitArgs),
    /// Grid search over K and λ by BIC
    Select(SelectArgs),
    /// Repeated simulation study
    Benchmark(BenchmarkArgs),
    /// Log-transform and/or centre a dataset
    Transform(TransformArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile {
            schema_version: config::SCHEMA_VERSION,
            ..Default::default()
        },
    };
    let threads = config::resolve_threads(cli.threads, cfg.threads)?;
    let parallel = threads != Some(1);
    if let Some(t) = threads.filter(|&t| t > 1) {
        // only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a.overlay(cfg.simulate)),
        Command::Fit(a) => commands::fit_cmd(a.overlay(cfg.fit)),
        Command::Select(a) => commands::select(a.overlay(cfg.select), parallel),
        Command::Benchmark(a) => commands::benchmark(a.overlay(cfg.benchmark), parallel),
        Command::Transform(a) => commands::transform(a.overlay(cfg.transform)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
