//! `fit`: one portfolio on one returns history, plus its allocation chart.

use crate::commands::{latest_caps, load_returns};
use crate::config::{resolve_output_dir, MethodName};
use crate::manifest::Manifest;
use crate::plot;
use anyhow::Context;
use clap::Args;
use index_tracker::baselines::{self, BaselineOptions};
use index_tracker::portfolio::save_portfolio;
use index_tracker::selector::{self, FitOptions};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Price panel CSV (date,ticker,adj_close and optional market_cap)
    #[arg(long)]
    pub prices: PathBuf,
    /// Benchmark CSV (date,level)
    #[arg(long)]
    pub benchmark: PathBuf,
    /// Cardinality budget
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, value_enum)]
    pub method: MethodName,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Selector iterations (stochastic method only)
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Selector learning rate (stochastic method only)
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Keep the trained allocation instead of re-solving on the support
    #[arg(long)]
    pub no_refine: bool,
    /// Output directory (default: config, $INDEX_TRACKER_OUT, ./runs)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &FitArgs) -> anyhow::Result<()> {
    let out = resolve_output_dir(args.out.as_deref(), None);
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;

    let (panel, _, returns) = load_returns(&args.prices, &args.benchmark)?;
    let k = args.k as usize;

    let mut opts = FitOptions::default();
    opts.train.k = k;
    opts.train.seed = args.seed;
    if let Some(iterations) = args.iterations {
        opts.train.iterations = iterations;
    }
    if let Some(learning_rate) = args.learning_rate {
        opts.train.learning_rate = learning_rate;
    }
    opts.refine = !args.no_refine;
    let baseline = BaselineOptions {
        qp_tol: opts.qp_tol,
        qp_max_iter: opts.qp_max_iter,
    };

    let portfolio = match args.method {
        MethodName::Ours => selector::fit_portfolio(&returns, &opts)?,
        MethodName::Forward => baselines::forward_selection(&returns, k, &baseline)?,
        MethodName::Backward => baselines::backward_selection(&returns, k, &baseline)?,
        MethodName::Cap => {
            let caps = latest_caps(&panel, returns.tickers())
                .context("largest_cap needs a market_cap column in the price panel")?;
            baselines::largest_cap(&returns, &caps, k, &baseline)?
        }
        MethodName::Qp => baselines::dense_qp(&returns, &baseline)?,
    };

    let name = args.method.as_str();
    let stem = format!("{name}_k{k}_seed{}", args.seed);
    let mut manifest = Manifest::new("fit");

    let portfolio_path = out.join(format!("portfolio_{stem}.json"));
    save_portfolio(&portfolio, &portfolio_path)?;
    manifest.record(&out, &portfolio_path)?;

    let svg = plot::bar_chart(
        &format!(
            "{name} allocation (K = {k}, selected {})",
            portfolio.k_effective
        ),
        "weight",
        &portfolio.tickers,
        &portfolio.weights,
    );
    let chart_path = out.join(format!("allocation_{stem}.svg"));
    crate::write_atomic(&chart_path, &svg)?;
    manifest.record(&out, &chart_path)?;
    manifest.write(&out)?;

    println!(
        "fit {name}: K = {}, selected {} of {} assets, in-sample MSE {:.6e} -> {}",
        portfolio.k_requested,
        portfolio.k_effective,
        returns.n_assets(),
        portfolio.in_sample_mse,
        portfolio_path.display()
    );
    Ok(())
}
