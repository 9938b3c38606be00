//! Command-line interface for sparse index tracking.
//!
//! Four subcommands cover the workflow end to end: `gen-toy` writes a
//! synthetic dataset, `fit` builds one portfolio, `backtest` runs a
//! (method, K) grid through the sliding-window engine, and `sweep` refits
//! across seeds to measure run-to-run spread. Commands are idempotent:
//! given the same inputs and seeds they rewrite byte-identical artifacts,
//! with timestamps confined to `manifest.json`.

mod commands;
mod config;
mod manifest;
mod plot;

use clap::{Parser, Subcommand};
use std::path::Path;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "index-tracker",
    version,
    about = "Sparse index-tracking portfolios: generate data, fit, backtest, sweep",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic duplicated-groups dataset
    GenToy(commands::gen_toy::GenToyArgs),
    /// Fit one portfolio and plot its allocation
    Fit(commands::fit::FitArgs),
    /// Run a (method, K) backtest grid from a config file
    Backtest(commands::backtest::BacktestArgs),
    /// Refit across seeds and report mean/std bands
    Sweep(commands::sweep::SweepArgs),
}

/// Write-then-rename so concurrent runs never observe partial files.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy())
            .unwrap_or_default()
    ));
    std::fs::write(&tmp, contents)
        .map_err(|e| anyhow::anyhow!("writing {}: {e}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| anyhow::anyhow!("renaming into {}: {e}", path.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenToy(args) => commands::gen_toy::run(args),
        Command::Fit(args) => commands::fit::run(args),
        Command::Backtest(args) => commands::backtest::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
