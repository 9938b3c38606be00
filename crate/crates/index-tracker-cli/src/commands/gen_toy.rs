//! `gen-toy`: write the synthetic duplicated-groups dataset to disk.

use crate::config::resolve_output_dir;
use crate::manifest::Manifest;
use anyhow::Context;
use clap::Args;
use index_tracker::market_data::{
    generate_toy, write_benchmark, write_groups, write_prices, ToySpec,
};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct GenToyArgs {
    /// Number of duplicate groups
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub groups: u64,
    /// Number of return observations
    #[arg(long, default_value_t = 750, value_parser = clap::value_parser!(u64).range(2..))]
    pub length: u64,
    /// Minimum near-duplicates per group
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub dup_min: u64,
    /// Maximum near-duplicates per group
    #[arg(long, default_value_t = 200)]
    pub dup_max: u64,
    /// Standard deviation of the group base returns
    #[arg(long, default_value_t = 0.01)]
    pub base_scale: f64,
    /// Standard deviation of the per-asset noise
    #[arg(long, default_value_t = 0.001)]
    pub noise_scale: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Price level every exported series starts from
    #[arg(long, default_value_t = 100.0)]
    pub initial_price: f64,
    /// Output directory (default: config, $INDEX_TRACKER_OUT, ./runs)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &GenToyArgs) -> anyhow::Result<()> {
    let out = resolve_output_dir(args.out.as_deref(), None);
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;

    let spec = ToySpec {
        n_groups: args.groups as usize,
        series_length: args.length as usize,
        dup_range: (args.dup_min as usize, args.dup_max as usize),
        base_scale: args.base_scale,
        noise_scale: args.noise_scale,
        seed: args.seed,
    };
    let toy = generate_toy::<f64>(&spec)?;
    let (panel, benchmark) = toy.to_price_panels(args.initial_price)?;

    let mut manifest = Manifest::new("gen-toy");
    let prices_path = out.join("prices.csv");
    write_prices(&panel, &prices_path)?;
    manifest.record(&out, &prices_path)?;

    let benchmark_path = out.join("benchmark.csv");
    write_benchmark(&benchmark, &benchmark_path)?;
    manifest.record(&out, &benchmark_path)?;

    let groups_path = out.join("groups.csv");
    write_groups(toy.returns.tickers(), &toy.group_labels, &groups_path)?;
    manifest.record(&out, &groups_path)?;

    let spec_path = out.join("toy_spec.json");
    crate::write_atomic(
        &spec_path,
        &serde_json::to_string_pretty(&spec).context("serializing toy spec")?,
    )?;
    manifest.record(&out, &spec_path)?;
    manifest.write(&out)?;

    println!(
        "toy dataset: {} groups, {} assets, {} trading days ({} .. {}), seed {} -> {}",
        spec.n_groups,
        panel.n_assets(),
        panel.n_dates(),
        panel.dates()[0],
        panel.dates()[panel.n_dates() - 1],
        spec.seed,
        out.display()
    );
    Ok(())
}
