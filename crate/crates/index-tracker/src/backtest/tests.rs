use super::*;
use crate::market_data::{business_days, generate_toy, ToySpec};
use crate::selector::TrainConfig;
use chrono::NaiveDate;
use ndarray::Array2;
use serde_json::json;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Complete panel from per-ticker price paths of equal length.
fn panel_of(start: NaiveDate, paths: &[(&str, Vec<f64>)]) -> PricePanel {
    let n_dates = paths[0].1.len();
    let dates = business_days(start, n_dates);
    let tickers = paths.iter().map(|(name, _)| name.to_string()).collect();
    let prices = Array2::from_shape_fn((n_dates, paths.len()), |(t, i)| paths[i].1[t]);
    PricePanel::new(dates, tickers, prices, None).unwrap()
}

/// A fitter that ignores the returns and hands back fixed weights.
fn fixed(weights: &[(&str, f64)]) -> FittedPortfolio<f64> {
    FittedPortfolio {
        tickers: weights.iter().map(|(name, _)| name.to_string()).collect(),
        weights: weights.iter().map(|&(_, w)| w).collect(),
        k_requested: weights.len(),
        k_effective: weights.len(),
        in_sample_mse: 0.0,
        seed: 0,
        method: "fixed".into(),
        config: json!({}),
    }
}

fn assert_event_invariants(result: &BacktestResult, config: &BacktestConfig) {
    for event in &result.events {
        assert!(
            (event.post_trade_value + event.fees_paid - event.pre_trade_value).abs() <= 1e-6,
            "conservation violated at {}: pre {} post {} fees {}",
            event.date,
            event.pre_trade_value,
            event.post_trade_value,
            event.fees_paid
        );
        assert_eq!(
            event.fees_paid,
            config.fee_per_trade * event.trades.len() as f64,
            "fee accounting at {}",
            event.date
        );
        assert!(event.cash >= 0.0, "cash went negative at {}", event.date);
        for pair in event.trades.windows(2) {
            assert!(pair[0].ticker < pair[1].ticker, "trades not sorted");
        }
        for trade in &event.trades {
            assert_ne!(trade.shares_delta, 0, "zero-delta trade recorded");
        }
        for holding in &event.holdings {
            assert!(holding.shares > 0, "zero holding recorded");
        }
    }
}

#[test]
fn quarter_end_indices_match_the_2020_calendar() {
    // 261 business days starting 2020-01-02 end exactly on 2020-12-31
    let dates = business_days(date(2020, 1, 2), 261);
    assert_eq!(*dates.last().unwrap(), date(2020, 12, 31));

    let quarters: Vec<NaiveDate> = rebalance_indices(&dates, RebalanceRule::QuarterEnd)
        .into_iter()
        .map(|t| dates[t])
        .collect();
    assert_eq!(
        quarters,
        vec![
            date(2020, 3, 31),
            date(2020, 6, 30),
            date(2020, 9, 30),
            date(2020, 12, 31),
        ]
    );

    let months: Vec<NaiveDate> = rebalance_indices(&dates, RebalanceRule::MonthEnd)
        .into_iter()
        .map(|t| dates[t])
        .collect();
    assert_eq!(months.len(), 12);
    // 2020-02-29 is a Saturday, so February ends on the 28th
    assert_eq!(
        &months[..3],
        &[date(2020, 1, 31), date(2020, 2, 28), date(2020, 3, 31)]
    );
    assert_eq!(*months.last().unwrap(), date(2020, 12, 31));
}

#[test]
fn truncated_panel_emits_no_spurious_final_rebalance() {
    // ends 2020-02-12, far from any quarter boundary
    let dates = business_days(date(2020, 1, 2), 30);
    assert_eq!(*dates.last().unwrap(), date(2020, 2, 12));
    assert!(rebalance_indices(&dates, RebalanceRule::QuarterEnd).is_empty());
    // ... but it is a valid mid-month truncation for the month rule too
    assert!(rebalance_indices(&dates, RebalanceRule::MonthEnd)
        .into_iter()
        .map(|t| dates[t])
        .eq([date(2020, 1, 31)]));
}

#[test]
fn perfect_replication_stays_within_the_quantisation_bound() {
    // one asset that IS the index: flat until after the first rebalance,
    // then a gentle oscillation
    let path: Vec<f64> = (0..505)
        .map(|t| {
            if t <= 70 {
                5.0
            } else {
                5.0 * (1.0 + 0.02 * ((t - 70) as f64 / 40.0).sin())
            }
        })
        .collect();
    let panel = panel_of(date(2010, 1, 4), &[("IDX", path.clone())]);
    let benchmark = panel_of(date(2010, 1, 4), &[("BENCH", path)]);
    let config = BacktestConfig {
        train_window: 60,
        fee_per_trade: 0.0,
        initial_capital: 1e5,
        k: 1,
        ..BacktestConfig::default()
    };

    let result = run_backtest_with(&panel, &benchmark, &config, &mut |_, _| {
        Ok(fixed(&[("IDX", 1.0)]))
    })
    .unwrap();

    assert_eq!(result.equity_curve[0], 1e5);
    assert_eq!(result.index_curve[0], 1e5);
    assert!(result.events.len() >= 6);
    assert_event_invariants(&result, &config);
    for event in &result.events {
        assert_eq!(event.fees_paid, 0.0);
    }

    // a whole-share tracker of a single-asset index can only deviate by the
    // sub-one-share remainder, well inside ten currency units of capital
    let bound = 10.0 / config.initial_capital;
    assert!(
        result.metrics.max_abs_pe < bound,
        "max |pe| {} exceeds {}",
        result.metrics.max_abs_pe,
        bound
    );
}

/// Shared three-asset constant-price fixture; targets alternate between
/// {A, B} and {B, C} so every event trades.
fn alternating_backtest(fee_per_trade: f64) -> (BacktestConfig, BacktestResult) {
    let n = 560;
    let panel = panel_of(
        date(2020, 1, 2),
        &[
            ("A", vec![10.0; n]),
            ("B", vec![20.0; n]),
            ("C", vec![40.0; n]),
        ],
    );
    let benchmark = panel_of(date(2020, 1, 2), &[("BENCH", vec![100.0; n])]);
    let config = BacktestConfig {
        train_window: 60,
        fee_per_trade,
        initial_capital: 1e6,
        k: 2,
        ..BacktestConfig::default()
    };
    let result = run_backtest_with(&panel, &benchmark, &config, &mut |_, ctx| {
        Ok(if ctx.event % 2 == 0 {
            fixed(&[("A", 0.6), ("B", 0.4)])
        } else {
            fixed(&[("B", 0.5), ("C", 0.5)])
        })
    })
    .unwrap();
    (config, result)
}

#[test]
fn fees_are_flat_per_traded_ticker() {
    let (config, result) = alternating_backtest(5.0);
    assert!(result.events.len() >= 7);
    assert_event_invariants(&result, &config);

    // first event buys into A and B from all cash
    let first = &result.events[0];
    assert_eq!(first.trades.len(), 2);
    assert_eq!(first.fees_paid, 10.0);
    assert!(first.trades.iter().all(|t| t.shares_delta > 0));

    // second event exits A entirely and opens C
    let second = &result.events[1];
    let a = second.trades.iter().find(|t| t.ticker == "A").unwrap();
    let c = second.trades.iter().find(|t| t.ticker == "C").unwrap();
    assert_eq!(a.shares_delta, -(first.holdings[0].shares as i64));
    assert!(c.shares_delta > 0);
    assert_eq!(second.fees_paid, 5.0 * second.trades.len() as f64);
}

#[test]
fn higher_fees_never_improve_final_equity() {
    let finals: Vec<f64> = [0.0, 5.0, 50.0]
        .into_iter()
        .map(|fee| {
            let (config, result) = alternating_backtest(fee);
            assert_event_invariants(&result, &config);
            *result.equity_curve.last().unwrap()
        })
        .collect();
    assert!(
        finals[0] >= finals[1] && finals[1] >= finals[2],
        "{finals:?}"
    );
    // with constant prices the drag is exactly the accumulated fees
    assert_eq!(finals[0], 1e6);
    assert!(finals[2] < 1e6);
}

#[test]
fn ten_years_of_quarters_gives_forty_rebalances() {
    let dates: Vec<NaiveDate> = business_days(date(2010, 1, 4), 2700)
        .into_iter()
        .filter(|d| d.year() <= 2019)
        .collect();
    let n = dates.len();
    let path: Vec<f64> = (0..n)
        .map(|t| 5.0 * (1.0 + 0.3 * (t as f64 / 100.0).sin()))
        .collect();
    let prices = Array2::from_shape_fn((n, 1), |(t, _)| path[t]);
    let panel = PricePanel::new(dates.clone(), vec!["IDX".into()], prices.clone(), None).unwrap();
    let benchmark = PricePanel::new(dates, vec!["BENCH".into()], prices, None).unwrap();
    let config = BacktestConfig {
        train_window: 50,
        fee_per_trade: 0.0,
        initial_capital: 1e6,
        k: 1,
        ..BacktestConfig::default()
    };

    let result = run_backtest_with(&panel, &benchmark, &config, &mut |_, _| {
        Ok(fixed(&[("IDX", 1.0)]))
    })
    .unwrap();

    assert_eq!(result.events.len(), 40);
    assert_eq!(result.events[0].date, date(2010, 3, 31));
    assert_eq!(result.events.last().unwrap().date, date(2019, 12, 31));
    assert_eq!(result.rebalance_indices.len(), 40);
    assert_eq!(result.equity_curve.len(), result.dates.len());

    // 40 anchors give 39 per-rebalance returns and defined curve statistics
    let anchors = &result.rebalance_indices;
    assert_eq!(
        returns_between(&result.equity_curve, anchors)
            .unwrap()
            .len(),
        39
    );
    assert!(result.metrics.tracker.volatility.is_finite());
    assert!(result.metrics.index.volatility > 0.0);
    assert!((-1.0..=0.0).contains(&result.metrics.tracker.max_drawdown));

    let max_abs = result
        .metrics
        .percentage_error
        .iter()
        .fold(0.0f64, |acc, pe| acc.max(pe.abs()));
    assert_eq!(result.metrics.max_abs_pe, max_abs);
}

#[test]
fn too_short_a_history_is_rejected() {
    let n = 300;
    let panel = panel_of(date(2020, 1, 2), &[("A", vec![10.0; n])]);
    let benchmark = panel_of(date(2020, 1, 2), &[("BENCH", vec![100.0; n])]);
    let config = BacktestConfig {
        train_window: 750,
        ..BacktestConfig::default()
    };
    let err = run_backtest(&panel, &benchmark, &config).unwrap_err();
    assert!(matches!(err, Error::InsufficientHistory(_)), "{err}");
}

#[test]
fn mismatched_date_axes_are_rejected() {
    let panel = panel_of(date(2020, 1, 2), &[("A", vec![10.0; 100])]);
    let shifted = panel_of(date(2020, 1, 3), &[("BENCH", vec![100.0; 100])]);
    let err = run_backtest(&panel, &shifted, &BacktestConfig::default()).unwrap_err();
    assert!(matches!(err, Error::DateAxisMismatch(_)), "{err}");

    let wide = panel_of(
        date(2020, 1, 2),
        &[("B1", vec![1.0; 100]), ("B2", vec![2.0; 100])],
    );
    let err = run_backtest(&panel, &wide, &BacktestConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}

#[test]
fn assets_without_a_price_are_held_at_their_last_value() {
    let dates = business_days(date(2020, 1, 2), 300);
    let quarters = rebalance_indices(&dates, RebalanceRule::QuarterEnd);
    let gap = quarters[1];
    let n = dates.len();
    let prices = Array2::from_shape_fn((n, 2), |(t, i)| {
        if i == 1 && (t == gap - 1 || t == gap) {
            f64::NAN
        } else if i == 1 {
            20.0
        } else {
            10.0
        }
    });
    let panel = PricePanel::new(dates.clone(), vec!["A".into(), "B".into()], prices, None).unwrap();
    let benchmark = PricePanel::new(
        dates,
        vec!["BENCH".into()],
        Array2::from_elem((n, 1), 100.0),
        None,
    )
    .unwrap();
    let config = BacktestConfig {
        train_window: 60,
        fee_per_trade: 1.0,
        initial_capital: 1e5,
        k: 2,
        ..BacktestConfig::default()
    };

    let result = run_backtest_with(&panel, &benchmark, &config, &mut |returns, ctx| {
        Ok(if ctx.event == 0 {
            fixed(&[("A", 0.5), ("B", 0.5)])
        } else {
            if ctx.event == 1 {
                // B has no quote inside the second training window, so it
                // must have been dropped from the universe handed to the
                // fitter
                assert_eq!(returns.tickers(), ["A".to_string()]);
            }
            fixed(&[("A", 1.0)])
        })
    })
    .unwrap();

    assert!(result.events.len() >= 3);
    assert_event_invariants(&result, &config);

    let bought = result.events[0]
        .holdings
        .iter()
        .find(|h| h.ticker == "B")
        .unwrap()
        .shares;

    // unquoted at the second event: B is carried, valued by forward fill,
    // and not traded
    let second = &result.events[1];
    assert!(second.trades.iter().all(|t| t.ticker != "B"));
    let carried = second.holdings.iter().find(|h| h.ticker == "B").unwrap();
    assert_eq!(carried.shares, bought);

    // quoted again at the third event: now it is sold
    let third = &result.events[2];
    let sale = third.trades.iter().find(|t| t.ticker == "B").unwrap();
    assert_eq!(sale.shares_delta, -(bought as i64));
    assert!(third.holdings.iter().all(|h| h.ticker != "B"));
}

#[test]
fn stochastic_backtests_are_reproducible() {
    let spec = ToySpec {
        n_groups: 3,
        series_length: 340,
        dup_range: (2, 4),
        seed: 7,
        ..ToySpec::default()
    };
    let toy = generate_toy::<f64>(&spec).unwrap();
    let (panel, benchmark) = toy.to_price_panels(50.0).unwrap();
    let config = BacktestConfig {
        train_window: 60,
        initial_capital: 1e6,
        k: 3,
        method: Method::Stochastic {
            options: FitOptions {
                train: TrainConfig {
                    iterations: 120,
                    ..TrainConfig::default()
                },
                ..FitOptions::default()
            },
        },
        seed: 42,
        ..BacktestConfig::default()
    };

    let a = run_backtest(&panel, &benchmark, &config).unwrap();
    let b = run_backtest(&panel, &benchmark, &config).unwrap();

    assert!(a.events.len() >= 4);
    assert_eq!(a.equity_curve, b.equity_curve);
    assert_eq!(a.index_curve, b.index_curve);
    assert_eq!(a.events.len(), b.events.len());
    for (ea, eb) in a.events.iter().zip(&b.events) {
        assert_eq!(ea, eb);
    }
    assert_eq!(a.metrics, b.metrics);
    assert_event_invariants(&a, &config);

    // each event fits under its own derived seed
    for (i, event) in a.events.iter().enumerate() {
        assert_eq!(event.portfolio.seed, crate::rng::derive_seed(42, i as u64));
        assert_eq!(event.portfolio.method, "stochastic");
        assert!(event.portfolio.k_effective <= 3);
    }
}

#[test]
fn exports_round_trip_byte_identically() {
    let (_, result) = alternating_backtest(5.0);
    let dir = tempfile::tempdir().unwrap();
    let equity_path = dir.path().join("equity.csv");
    let events_path = dir.path().join("events.csv");
    let metrics_path = dir.path().join("metrics.json");

    write_equity_csv(&result, &equity_path).unwrap();
    write_events_csv(&result.events, &events_path).unwrap();
    write_metrics_json(&result.metrics, &metrics_path).unwrap();

    // write -> read -> write reproduces both CSVs exactly
    let equity_rows = read_equity_csv(&equity_path).unwrap();
    assert_eq!(equity_rows.len(), result.dates.len());
    let equity_again = dir.path().join("equity2.csv");
    write_equity_rows(&equity_rows, &equity_again).unwrap();
    assert_eq!(
        std::fs::read(&equity_path).unwrap(),
        std::fs::read(&equity_again).unwrap()
    );

    let event_rows = read_events_csv(&events_path).unwrap();
    let n_trades: usize = result.events.iter().map(|e| e.trades.len()).sum();
    assert_eq!(event_rows.len(), n_trades);
    let events_again = dir.path().join("events2.csv");
    write_event_rows(&event_rows, &events_again).unwrap();
    assert_eq!(
        std::fs::read(&events_path).unwrap(),
        std::fs::read(&events_again).unwrap()
    );

    // currency columns carry six digits; pe is exact
    for (t, row) in equity_rows.iter().enumerate() {
        assert!((row.tracker_value - result.equity_curve[t]).abs() <= 5e-7);
        assert!((row.index_value - result.index_curve[t]).abs() <= 5e-7);
        assert_eq!(row.pe, result.metrics.percentage_error[t]);
    }

    // metrics survive a JSON parse-reserialize cycle bitwise
    let text = std::fs::read_to_string(&metrics_path).unwrap();
    let parsed: MetricsReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, result.metrics);
    let rewritten = dir.path().join("metrics2.json");
    write_metrics_json(&parsed, &rewritten).unwrap();
    assert_eq!(
        std::fs::read(&metrics_path).unwrap(),
        std::fs::read(&rewritten).unwrap()
    );
}

#[test]
fn method_names_and_config_serde_round_trip() {
    let config = BacktestConfig::default();
    assert_eq!(config.method.name(), "stochastic");
    let text = serde_json::to_string(&config).unwrap();
    let back: BacktestConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, config);

    for (method, name) in [
        (
            Method::ForwardSelection {
                options: BaselineOptions::default(),
            },
            "forward_selection",
        ),
        (
            Method::BackwardSelection {
                options: BaselineOptions::default(),
            },
            "backward_selection",
        ),
        (
            Method::LargestCap {
                options: BaselineOptions::default(),
            },
            "largest_cap",
        ),
        (
            Method::DenseQp {
                options: BaselineOptions::default(),
            },
            "dense_qp",
        ),
    ] {
        assert_eq!(method.name(), name);
        let text = serde_json::to_string(&method).unwrap();
        assert!(text.contains(name), "{text}");
    }
}
