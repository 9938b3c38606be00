//! Subcommand implementations.

pub mod backtest;
pub mod fit;
pub mod gen_toy;
pub mod sweep;

use anyhow::Context;
use index_tracker::market_data::{
    compute_log_returns, load_benchmark, load_prices, PricePanel, ReturnsMatrix,
};
use std::path::Path;

/// Load both panels and the full-history log-return matrix. Assets with any
/// missing price are dropped from the training universe, matching what the
/// backtester does per window.
pub(crate) fn load_returns(
    prices: &Path,
    benchmark: &Path,
) -> anyhow::Result<(PricePanel, PricePanel, ReturnsMatrix<f64>)> {
    let panel =
        load_prices(prices).with_context(|| format!("loading prices {}", prices.display()))?;
    let bench = load_benchmark(benchmark)
        .with_context(|| format!("loading benchmark {}", benchmark.display()))?;
    let complete = panel.window(0, panel.n_dates() - 1)?;
    let returns = compute_log_returns::<f64>(&complete, &bench)?;
    Ok((panel, bench, returns))
}

/// Latest market cap at or before the last date, aligned with `tickers`.
pub(crate) fn latest_caps(panel: &PricePanel, tickers: &[String]) -> Option<Vec<f64>> {
    panel.has_market_caps().then(|| {
        let last = panel.n_dates() - 1;
        tickers
            .iter()
            .map(|ticker| {
                let col = panel
                    .tickers()
                    .iter()
                    .position(|t| t == ticker)
                    .expect("universe tickers come from the panel");
                (0..=last)
                    .rev()
                    .find_map(|t| panel.market_cap(t, col))
                    .unwrap_or(f64::NAN)
            })
            .collect()
    })
}
