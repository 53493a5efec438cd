#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::failure::Failure;

/// Gradient flows of 1D interaction energies, Wasserstein distances and
/// discrete optimal transport.
#[derive(Parser)]
#[command(name = "wgflow", version)]
struct Cli {
    /// Experiment config (JSON), used by `run`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for `run`, plan CSV path for `ot`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recorded in the manifest; runs are deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress normal output; errors are still reported.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file.
    Run {
        /// Config path (alternative to --config).
        path: Option<PathBuf>,
    },
    /// Exact W2 distance between two measures given as JSON.
    W2 {
        measure_a: PathBuf,
        measure_b: PathBuf,
    },
    /// Primal and dual optimal transport objectives of a JSON instance.
    Ot { instance: PathBuf },
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("WGFLOW_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        Failure::invalid(
            "WGFLOW_THREADS",
            format!("expected a positive integer, got {raw:?}"),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn execute(cli: &Cli) -> Result<String, Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Run { path } => {
            let path = path
                .as_ref()
                .or(cli.config.as_ref())
                .ok_or_else(|| Failure::invalid("config", "run needs --config <path>"))?;
            let cfg = ExperimentConfig::load(path, cli.out.as_deref())?;
            commands::run(&cfg, cli.seed)
        }
        Command::W2 {
            measure_a,
            measure_b,
        } => commands::w2(measure_a, measure_b),
        Command::Ot { instance } => commands::ot(instance, cli.out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            // w2 and ot print their result even when quiet
            if !cli.quiet || !matches!(cli.command, Command::Run { .. }) {
                println!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("{}", failure.record());
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}
