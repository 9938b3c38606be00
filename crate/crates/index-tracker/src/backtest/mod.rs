//! Sliding-window backtesting with integer-share execution and flat fees.
//!
//! At each rebalance date the engine refits a portfolio on the trailing
//! window of log-returns, converts the target weights into whole shares at
//! that day's close, charges a flat fee per traded ticker and holds the
//! result until the next rebalance, marking to market daily.

mod export;
mod metrics;

pub use export::{
    read_equity_csv, read_events_csv, write_equity_csv, write_equity_rows, write_event_rows,
    write_events_csv, write_metrics_json, EquityRow, EventRow,
};
pub use metrics::{
    max_drawdown, percentage_error, returns_between, sharpe, volatility, CurveStats, MetricsReport,
};

use crate::baselines::{self, BaselineOptions};
use crate::error::{Error, Result};
use crate::market_data::{compute_log_returns, PricePanel, ReturnsMatrix};
use crate::portfolio::FittedPortfolio;
use crate::rng::derive_seed;
use crate::selector::{self, FitOptions};
use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Calendar rule deciding which trading days are rebalance dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceRule {
    /// Last trading day of each calendar quarter.
    #[default]
    QuarterEnd,
    /// Last trading day of each calendar month.
    MonthEnd,
}

/// Portfolio construction strategy run at each rebalance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Method {
    /// The stochastic selector. `k` and the per-event seed come from the
    /// backtest config and override the embedded options.
    Stochastic {
        #[serde(default)]
        options: FitOptions,
    },
    ForwardSelection {
        #[serde(default)]
        options: BaselineOptions,
    },
    BackwardSelection {
        #[serde(default)]
        options: BaselineOptions,
    },
    LargestCap {
        #[serde(default)]
        options: BaselineOptions,
    },
    /// Cardinality-free constrained least squares on the whole universe.
    DenseQp {
        #[serde(default)]
        options: BaselineOptions,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Stochastic { .. } => "stochastic",
            Method::ForwardSelection { .. } => "forward_selection",
            Method::BackwardSelection { .. } => "backward_selection",
            Method::LargestCap { .. } => "largest_cap",
            Method::DenseQp { .. } => "dense_qp",
        }
    }
}

/// Backtest parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Trailing log-return observations per fit.
    pub train_window: usize,
    pub rebalance_rule: RebalanceRule,
    pub fee_per_trade: f64,
    pub initial_capital: f64,
    pub k: usize,
    pub method: Method,
    pub seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            train_window: 750,
            rebalance_rule: RebalanceRule::QuarterEnd,
            fee_per_trade: 5.0,
            initial_capital: 1_000_000.0,
            k: 10,
            method: Method::Stochastic {
                options: FitOptions::default(),
            },
            seed: 42,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_window < 2 {
            return Err(Error::InvalidArgument(format!(
                "train_window {} must be at least 2",
                self.train_window
            )));
        }
        if !(self.fee_per_trade.is_finite() && self.fee_per_trade >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fee_per_trade {} must be non-negative",
                self.fee_per_trade
            )));
        }
        if !(self.initial_capital.is_finite() && self.initial_capital > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "initial_capital {} must be positive",
                self.initial_capital
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// One executed trade: the share delta of one ticker at one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub ticker: String,
    pub shares_delta: i64,
    pub fee: f64,
}

/// Post-trade position in one ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holding {
    pub ticker: String,
    pub shares: u64,
}

/// Everything that happened at one rebalance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RebalanceEvent {
    pub date: NaiveDate,
    pub portfolio: FittedPortfolio<f64>,
    /// Non-zero share deltas, sorted by ticker.
    pub trades: Vec<Trade>,
    pub fees_paid: f64,
    /// Non-zero positions after trading, sorted by ticker.
    pub holdings: Vec<Holding>,
    pub cash: f64,
    pub pre_trade_value: f64,
    /// Market value of holdings plus cash right after trading; conservation
    /// means `post_trade_value + fees_paid == pre_trade_value`.
    pub post_trade_value: f64,
}

/// Full backtest output.
#[derive(Debug, Clone, Serialize)]
pub struct BacktestResult {
    pub dates: Vec<NaiveDate>,
    /// Portfolio market value per trading day, starting at the initial
    /// capital (held as cash until the first rebalance).
    pub equity_curve: Vec<f64>,
    /// Benchmark level rebased to the initial capital at the first date.
    pub index_curve: Vec<f64>,
    pub events: Vec<RebalanceEvent>,
    /// Date indices of the events; anchors for per-rebalance returns.
    pub rebalance_indices: Vec<usize>,
    pub metrics: MetricsReport,
}

/// What a fitter learns about the rebalance it is fitting for.
#[derive(Debug, Clone)]
pub struct FitContext {
    /// 0-based event counter.
    pub event: usize,
    pub date: NaiveDate,
    /// Event seed, derived from the config seed and the event counter.
    pub seed: u64,
    /// Latest market cap at or before the event date, aligned with the
    /// training universe; `NaN` where the panel has none.
    pub caps: Option<Vec<f64>>,
}

/// Date indices of the last trading day of each calendar quarter (or
/// month), per the panel's own calendar.
///
/// A date qualifies when no later panel date shares its bucket and it lies
/// within a week of the calendar boundary; the second condition stops a
/// panel that merely ends mid-quarter from producing a spurious rebalance
/// on its final row, while tolerating holidays around the true boundary.
pub fn rebalance_indices(dates: &[NaiveDate], rule: RebalanceRule) -> Vec<usize> {
    let bucket = |d: NaiveDate| match rule {
        RebalanceRule::QuarterEnd => (d.year(), (d.month0() / 3) as i32),
        RebalanceRule::MonthEnd => (d.year(), d.month() as i32),
    };
    let near_boundary =
        |d: NaiveDate| (1..=7).any(|k| bucket(d + chrono::Days::new(k)) != bucket(d));
    let mut out = Vec::new();
    for (t, &d) in dates.iter().enumerate() {
        let last_in_bucket = match dates.get(t + 1) {
            Some(&next) => bucket(next) != bucket(d),
            None => true,
        };
        if last_in_bucket && near_boundary(d) {
            out.push(t);
        }
    }
    out
}

fn fit_for_method(
    method: &Method,
    k: usize,
    returns: &ReturnsMatrix<f64>,
    ctx: &FitContext,
) -> Result<FittedPortfolio<f64>> {
    // a shrunken universe caps the effective cardinality budget
    let k_run = k.min(returns.n_assets());
    match method {
        Method::Stochastic { options } => {
            let mut options = options.clone();
            options.train.k = k_run;
            options.train.seed = ctx.seed;
            selector::fit_portfolio(returns, &options)
        }
        Method::ForwardSelection { options } => {
            baselines::forward_selection(returns, k_run, options)
        }
        Method::BackwardSelection { options } => {
            baselines::backward_selection(returns, k_run, options)
        }
        Method::LargestCap { options } => {
            let caps = ctx.caps.as_ref().ok_or_else(|| Error::MissingMarketCap {
                ticker: "*".into(),
                detail: format!("no market caps in panel at {}", ctx.date),
            })?;
            baselines::largest_cap(returns, caps, k_run, options)
        }
        Method::DenseQp { options } => baselines::dense_qp(returns, options),
    }
}

/// Run a backtest with the strategy named in the config.
pub fn run_backtest(
    panel: &PricePanel,
    benchmark: &PricePanel,
    config: &BacktestConfig,
) -> Result<BacktestResult> {
    let method = config.method.clone();
    let k = config.k;
    run_backtest_with(panel, benchmark, config, &mut |returns, ctx| {
        fit_for_method(&method, k, returns, ctx)
    })
}

/// Run a backtest with an arbitrary fitter (injection point for tests and
/// custom strategies).
pub fn run_backtest_with<F>(
    panel: &PricePanel,
    benchmark: &PricePanel,
    config: &BacktestConfig,
    fitter: &mut F,
) -> Result<BacktestResult>
where
    F: FnMut(&ReturnsMatrix<f64>, &FitContext) -> Result<FittedPortfolio<f64>>,
{
    config.validate()?;
    if benchmark.n_assets() != 1 {
        return Err(Error::InvalidArgument(format!(
            "benchmark panel must have one column, found {}",
            benchmark.n_assets()
        )));
    }
    if panel.dates() != benchmark.dates() {
        return Err(Error::DateAxisMismatch(
            "panel and benchmark share no common date axis".into(),
        ));
    }
    let dates = panel.dates().to_vec();
    let n_dates = dates.len();
    let all_rebalances = rebalance_indices(&dates, config.rebalance_rule);
    let schedule: Vec<usize> = all_rebalances
        .into_iter()
        .filter(|&t| t >= config.train_window)
        .collect();
    if schedule.is_empty() {
        return Err(Error::InsufficientHistory(format!(
            "no rebalance date has {} prior trading days",
            config.train_window
        )));
    }

    let ticker_col: HashMap<&str, usize> = panel
        .tickers()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();

    let mut holdings: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cash = config.initial_capital;
    let mut events: Vec<RebalanceEvent> = Vec::with_capacity(schedule.len());
    let mut equity_curve = Vec::with_capacity(n_dates);
    let mut next_event = 0usize;

    let value_at = |t: usize, holdings: &BTreeMap<usize, u64>, cash: f64| -> f64 {
        let mut value = cash;
        for (&col, &shares) in holdings {
            let price = panel
                .price_with_ffill(t, col)
                .expect("held asset had a price when bought");
            value += shares as f64 * price;
        }
        value
    };

    for (t, &date) in dates.iter().enumerate() {
        if next_event < schedule.len() && t == schedule[next_event] {
            let pre_trade_value = value_at(t, &holdings, cash);
            let start = t - config.train_window;
            let window = panel.window(start, t)?;
            let bench_window = benchmark.window(start, t)?;
            let returns = compute_log_returns::<f64>(&window, &bench_window)?;

            let caps = panel.has_market_caps().then(|| {
                returns
                    .tickers()
                    .iter()
                    .map(|ticker| {
                        let col = ticker_col[ticker.as_str()];
                        (0..=t)
                            .rev()
                            .find_map(|s| panel.market_cap(s, col))
                            .unwrap_or(f64::NAN)
                    })
                    .collect::<Vec<f64>>()
            });
            let ctx = FitContext {
                event: next_event,
                date,
                seed: derive_seed(config.seed, next_event as u64),
                caps,
            };
            let portfolio = fitter(&returns, &ctx)?;
            portfolio.validate()?;

            let mut targets: BTreeMap<usize, f64> = BTreeMap::new();
            for (ticker, &w) in portfolio.tickers.iter().zip(&portfolio.weights) {
                let col = *ticker_col.get(ticker.as_str()).ok_or_else(|| {
                    Error::InvalidArgument(format!("fitted ticker {ticker} not in panel"))
                })?;
                if panel.price(t, col).is_none() {
                    return Err(Error::MissingPrice {
                        ticker: ticker.clone(),
                        date: date.to_string(),
                    });
                }
                targets.insert(col, w);
            }

            // positions with no price today cannot be traded; they are kept
            // at their forward-filled value and excluded from the buy budget
            let tradable_old: Vec<usize> = holdings
                .keys()
                .copied()
                .filter(|&col| panel.price(t, col).is_some())
                .collect();
            let untradable_value: f64 = holdings
                .iter()
                .filter(|(&col, _)| panel.price(t, col).is_none())
                .map(|(&col, &shares)| {
                    shares as f64 * panel.price_with_ffill(t, col).expect("held asset priced")
                })
                .sum();
            // the fee budget assumes every tradable held or targeted ticker
            // trades, so cash can never go negative
            let union: std::collections::BTreeSet<usize> = tradable_old
                .iter()
                .copied()
                .chain(targets.keys().copied())
                .collect();
            let fee_bound = config.fee_per_trade * union.len() as f64;
            let budget = (pre_trade_value - untradable_value - fee_bound).max(0.0);

            let mut new_holdings = holdings.clone();
            for &col in &tradable_old {
                if !targets.contains_key(&col) {
                    new_holdings.remove(&col);
                }
            }
            for (&col, &w) in &targets {
                let price = panel.price(t, col).expect("checked above");
                new_holdings.insert(col, (budget * w / price).floor() as u64);
            }
            new_holdings.retain(|_, shares| *shares > 0);

            let mut trades = Vec::new();
            for &col in &union {
                let old = holdings.get(&col).copied().unwrap_or(0) as i64;
                let new = new_holdings.get(&col).copied().unwrap_or(0) as i64;
                if new != old {
                    trades.push(Trade {
                        ticker: panel.tickers()[col].clone(),
                        shares_delta: new - old,
                        fee: config.fee_per_trade,
                    });
                }
            }
            trades.sort_by(|a, b| a.ticker.cmp(&b.ticker));
            let fees_paid = config.fee_per_trade * trades.len() as f64;

            let mut spent = 0.0;
            for (&col, &shares) in &new_holdings {
                let price = panel.price_with_ffill(t, col).expect("held asset priced");
                spent += shares as f64 * price;
            }
            // sells credit cash through the same equation: pre-trade value
            // already contains the old positions at today's prices
            cash = pre_trade_value - fees_paid - spent;
            holdings = new_holdings;

            let post_trade_value = value_at(t, &holdings, cash);
            events.push(RebalanceEvent {
                date,
                portfolio,
                trades,
                fees_paid,
                holdings: holdings
                    .iter()
                    .map(|(&col, &shares)| Holding {
                        ticker: panel.tickers()[col].clone(),
                        shares,
                    })
                    .collect(),
                cash,
                pre_trade_value,
                post_trade_value,
            });
            next_event += 1;
        }
        equity_curve.push(value_at(t, &holdings, cash));
    }

    let level0 = benchmark.price(0, 0).expect("benchmark is complete");
    let index_curve: Vec<f64> = (0..n_dates)
        .map(|t| {
            let level = benchmark.price(t, 0).expect("benchmark is complete");
            config.initial_capital * level / level0
        })
        .collect();

    let metrics = MetricsReport::compute(&equity_curve, &index_curve, &schedule)?;
    Ok(BacktestResult {
        dates,
        equity_curve,
        index_curve,
        events,
        rebalance_indices: schedule,
        metrics,
    })
}

#[cfg(test)]
mod tests;
