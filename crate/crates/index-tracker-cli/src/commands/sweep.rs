//! `sweep`: refit across seeds and report the spread.

use crate::commands::load_returns;
use crate::config::{resolve_output_dir, RunConfig};
use crate::manifest::Manifest;
use crate::plot;
use anyhow::Context;
use clap::Args;
use index_tracker::selector::{sweep_seeds, SweepResult};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Run configuration (TOML)
    pub config: PathBuf,
    /// Number of seeds, overriding the config
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub n_seeds: Option<u64>,
    /// Output directory (default: config, $INDEX_TRACKER_OUT, ./runs)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SweepSummary {
    k: usize,
    n_seeds: usize,
    base_seed: u64,
    mean_final_mse: f64,
    std_final_mse: f64,
    coefficient_of_variation: f64,
    mean_k_effective: f64,
}

fn seeds_csv(result: &SweepResult<f64>) -> String {
    let mut out = String::from("seed,final_mse,k_effective,tickers\n");
    for run in &result.runs {
        writeln!(
            out,
            "{},{},{},{}",
            run.seed,
            run.portfolio.in_sample_mse,
            run.portfolio.k_effective,
            run.portfolio.tickers.join("|")
        )
        .expect("string write");
    }
    out
}

fn losses_csv(result: &SweepResult<f64>) -> String {
    let mut out = String::from("iteration,mean_loss,std_loss\n");
    for (i, (mean, std)) in result
        .mean_losses
        .iter()
        .zip(&result.std_losses)
        .enumerate()
    {
        writeln!(out, "{i},{mean},{std}").expect("string write");
    }
    out
}

pub fn run(args: &SweepArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let out = resolve_output_dir(args.out.as_deref(), cfg.output_dir.as_deref());
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;

    let n_seeds = args
        .n_seeds
        .map(|n| n as usize)
        .unwrap_or(cfg.sweep.n_seeds);
    let base = cfg.sweep.base_seed;
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| base + i).collect();

    let (_, _, returns) = load_returns(&cfg.data.prices, &cfg.data.benchmark)?;

    let mut manifest = Manifest::new("sweep");
    for &k in &cfg.grid.k {
        let mut opts = cfg.fit.clone();
        opts.train.k = k;
        let result =
            sweep_seeds(&returns, &opts, &seeds).with_context(|| format!("sweeping K = {k}"))?;

        let seeds_path = out.join(format!("sweep_seeds_k{k}.csv"));
        crate::write_atomic(&seeds_path, &seeds_csv(&result))?;
        manifest.record(&out, &seeds_path)?;

        let losses_path = out.join(format!("sweep_losses_k{k}.csv"));
        crate::write_atomic(&losses_path, &losses_csv(&result))?;
        manifest.record(&out, &losses_path)?;

        let xs: Vec<f64> = (0..result.mean_losses.len()).map(|i| i as f64).collect();
        let band = plot::band_chart(
            &format!("Training loss across {n_seeds} seeds, K = {k}"),
            "iteration",
            "loss",
            &xs,
            &result.mean_losses,
            &result.std_losses,
        );
        let band_path = out.join(format!("sweep_band_k{k}.svg"));
        crate::write_atomic(&band_path, &band)?;
        manifest.record(&out, &band_path)?;

        let finals = result.final_mses();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let var =
            finals.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (finals.len() - 1) as f64;
        let cov = result.coefficient_of_variation()?;
        let summary = SweepSummary {
            k,
            n_seeds,
            base_seed: base,
            mean_final_mse: mean,
            std_final_mse: var.sqrt(),
            coefficient_of_variation: cov,
            mean_k_effective: result
                .runs
                .iter()
                .map(|r| r.portfolio.k_effective as f64)
                .sum::<f64>()
                / result.runs.len() as f64,
        };
        let summary_path = out.join(format!("sweep_summary_k{k}.json"));
        crate::write_atomic(
            &summary_path,
            &serde_json::to_string_pretty(&summary).context("serializing sweep summary")?,
        )?;
        manifest.record(&out, &summary_path)?;

        println!(
            "sweep K={k}: {n_seeds} seeds, final MSE {:.6e} +/- {:.6e}, CoV {:.4}",
            summary.mean_final_mse, summary.std_final_mse, cov
        );
    }
    manifest.write(&out)?;
    Ok(())
}
