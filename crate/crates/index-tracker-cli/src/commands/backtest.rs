//! `backtest`: run every (method, K) pair from a config file.

use crate::config::{resolve_output_dir, MethodName, RunConfig};
use crate::manifest::Manifest;
use crate::plot::{self, Series};
use anyhow::Context;
use clap::Args;
use index_tracker::backtest::{
    run_backtest, write_equity_csv, write_events_csv, write_metrics_json, BacktestResult,
};
use index_tracker::market_data::{load_benchmark, load_prices, PricePanel};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Args, Debug)]
pub struct BacktestArgs {
    /// Run configuration (TOML)
    pub config: PathBuf,
    /// Output directory (default: config, $INDEX_TRACKER_OUT, ./runs)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct PairOutcome {
    method: MethodName,
    k: usize,
    result: BacktestResult,
    files: Vec<PathBuf>,
}

fn run_pair(
    cfg: &RunConfig,
    panel: &PricePanel,
    bench: &PricePanel,
    method: MethodName,
    k: usize,
    out: &Path,
) -> anyhow::Result<PairOutcome> {
    let engine_cfg = cfg.backtest.to_config(k, method.to_method(&cfg.fit));
    let result = run_backtest(panel, bench, &engine_cfg)?;

    let dir = out.join(format!("{}_k{k}", method.as_str()));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating result directory {}", dir.display()))?;
    let equity = dir.join("equity.csv");
    write_equity_csv(&result, &equity)?;
    let events = dir.join("events.csv");
    write_events_csv(&result.events, &events)?;
    let metrics = dir.join("metrics.json");
    write_metrics_json(&result.metrics, &metrics)?;

    Ok(PairOutcome {
        method,
        k,
        result,
        files: vec![equity, events, metrics],
    })
}

fn opt_metric(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn comparison_csv(outcomes: &[&PairOutcome]) -> String {
    let mut out = String::from(
        "method,k,events,trades,total_fees,final_equity,max_abs_pe,mean_pe,\
         tracker_volatility,tracker_sharpe,tracker_max_drawdown,\
         index_volatility,index_sharpe,index_max_drawdown\n",
    );
    for o in outcomes {
        let r = &o.result;
        let trades: usize = r.events.iter().map(|e| e.trades.len()).sum();
        let fees: f64 = r.events.iter().map(|e| e.fees_paid).sum();
        writeln!(
            out,
            "{},{},{},{},{:.2},{:.2},{},{},{},{},{},{},{},{}",
            o.method.as_str(),
            o.k,
            r.events.len(),
            trades,
            fees,
            r.equity_curve.last().copied().unwrap_or_default(),
            r.metrics.max_abs_pe,
            r.metrics.mean_pe,
            r.metrics.tracker.volatility,
            opt_metric(r.metrics.tracker.sharpe),
            r.metrics.tracker.max_drawdown,
            r.metrics.index.volatility,
            opt_metric(r.metrics.index.sharpe),
            r.metrics.index.max_drawdown,
        )
        .expect("string write");
    }
    out
}

fn date_ticks(result: &BacktestResult) -> plot::TickLabels {
    let n = result.dates.len();
    let step = (n / 6).max(1);
    (0..n)
        .step_by(step)
        .map(|t| (t as f64, result.dates[t].to_string()))
        .collect()
}

fn equity_chart(k: usize, outcomes: &[&PairOutcome]) -> String {
    let first = &outcomes[0].result;
    let mut series = vec![Series {
        label: "index".into(),
        points: first
            .index_curve
            .iter()
            .enumerate()
            .map(|(t, &v)| (t as f64, v))
            .collect(),
    }];
    for o in outcomes {
        series.push(Series {
            label: o.method.as_str().into(),
            points: o
                .result
                .equity_curve
                .iter()
                .enumerate()
                .map(|(t, &v)| (t as f64, v))
                .collect(),
        });
    }
    plot::line_chart(
        &format!("Equity curves, K = {k}"),
        "date",
        "value",
        &series,
        Some(date_ticks(first)),
    )
}

fn metric_charts(outcomes: &[&PairOutcome]) -> Vec<(String, String)> {
    type Extract = fn(&BacktestResult) -> Option<f64>;
    let metrics: [(&str, Extract); 4] = [
        ("max_abs_pe", |r| Some(r.metrics.max_abs_pe)),
        ("tracker_volatility", |r| Some(r.metrics.tracker.volatility)),
        ("tracker_sharpe", |r| r.metrics.tracker.sharpe),
        ("tracker_max_drawdown", |r| {
            Some(r.metrics.tracker.max_drawdown)
        }),
    ];
    let mut methods: Vec<MethodName> = outcomes.iter().map(|o| o.method).collect();
    methods.sort();
    methods.dedup();

    let mut charts = Vec::new();
    for (metric, extract) in metrics {
        let mut series = Vec::new();
        for &method in &methods {
            let mut points: Vec<(f64, f64)> = outcomes
                .iter()
                .filter(|o| o.method == method)
                .filter_map(|o| extract(&o.result).map(|v| (o.k as f64, v)))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            if !points.is_empty() {
                series.push(Series {
                    label: method.as_str().into(),
                    points,
                });
            }
        }
        if series.is_empty() {
            continue;
        }
        let svg = plot::line_chart(&format!("{metric} vs K"), "K", metric, &series, None);
        charts.push((format!("{metric}_vs_k.svg"), svg));
    }
    charts
}

pub fn run(args: &BacktestArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let out = resolve_output_dir(args.out.as_deref(), cfg.output_dir.as_deref());
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;

    let panel = load_prices(&cfg.data.prices)
        .with_context(|| format!("loading prices {}", cfg.data.prices.display()))?;
    let bench = load_benchmark(&cfg.data.benchmark)
        .with_context(|| format!("loading benchmark {}", cfg.data.benchmark.display()))?;

    let pairs: Vec<(MethodName, usize)> = cfg
        .grid
        .methods
        .iter()
        .flat_map(|&m| cfg.grid.k.iter().map(move |&k| (m, k)))
        .collect();
    let total = pairs.len();

    // pairs are independent; fan out and collect per-pair results
    let runs: Vec<(MethodName, usize, anyhow::Result<PairOutcome>)> = pairs
        .into_par_iter()
        .map(|(m, k)| (m, k, run_pair(&cfg, &panel, &bench, m, k, &out)))
        .collect();

    let mut manifest = Manifest::new("backtest");
    let mut outcomes: Vec<PairOutcome> = Vec::new();
    for (method, k, run) in runs {
        match run {
            Ok(outcome) => {
                println!(
                    "ok {} K={k}: {} rebalances, max |PE| {:.6}",
                    method.as_str(),
                    outcome.result.events.len(),
                    outcome.result.metrics.max_abs_pe
                );
                outcomes.push(outcome);
            }
            Err(err) => {
                eprintln!("FAILED {} K={k}: {err:#}", method.as_str());
                manifest.record_failure(format!("{} k={k}", method.as_str()), err);
            }
        }
    }
    outcomes.sort_by_key(|a| (a.method, a.k));
    for outcome in &outcomes {
        for file in &outcome.files {
            manifest.record(&out, file)?;
        }
    }

    if !outcomes.is_empty() {
        let refs: Vec<&PairOutcome> = outcomes.iter().collect();
        let table_path = out.join("comparison.csv");
        crate::write_atomic(&table_path, &comparison_csv(&refs))?;
        manifest.record(&out, &table_path)?;

        let mut ks: Vec<usize> = refs.iter().map(|o| o.k).collect();
        ks.sort_unstable();
        ks.dedup();
        for k in ks {
            let of_k: Vec<&PairOutcome> = refs.iter().copied().filter(|o| o.k == k).collect();
            let path = out.join(format!("equity_k{k}.svg"));
            crate::write_atomic(&path, &equity_chart(k, &of_k))?;
            manifest.record(&out, &path)?;
        }
        for (name, svg) in metric_charts(&refs) {
            let path = out.join(name);
            crate::write_atomic(&path, &svg)?;
            manifest.record(&out, &path)?;
        }
    }

    let failed = manifest.failures.len();
    manifest.write(&out)?;
    if failed > 0 {
        anyhow::bail!("{failed} of {total} backtest runs failed; see manifest.json");
    }
    println!("wrote {} artifacts -> {}", total * 3, out.display());
    Ok(())
}
