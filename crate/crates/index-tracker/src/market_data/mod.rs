//! Price data ingestion and log-return matrices.
//!
//! Price data uses a long CSV layout, one row per `(date, ticker)`:
//!
//! ```text
//! date,ticker,adj_close[,market_cap]
//! 2010-01-04,AAA,101.25,1.2e9
//! ```
//!
//! The benchmark is its own series with header `date,level`. Files must be
//! sorted by date; prices must be strictly positive. Missing `(date,
//! ticker)` cells are allowed at the panel level; an asset with any missing
//! price inside a training window is excluded from that window's universe
//! (see [`PricePanel::window`]).

mod toy;

pub use toy::{generate_toy, ToyDataset, ToySpec};

use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::scalar::{real, Scalar};
use chrono::{Datelike, NaiveDate, Weekday};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use std::fmt::Write as _;
use std::path::Path;

/// Aligned panel of adjusted closing prices, with optional market caps.
///
/// Missing cells are stored as NaN; present prices are strictly positive.
#[derive(Debug, Clone)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    prices: Array2<f64>,
    market_caps: Option<Array2<f64>>,
}

fn cells_eq(a: &Array2<f64>, b: &Array2<f64>) -> bool {
    a.dim() == b.dim()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x.is_nan() && y.is_nan()) || x == y)
}

/// Equality treats missing cells (NaN) as equal to each other.
impl PartialEq for PricePanel {
    fn eq(&self, other: &Self) -> bool {
        self.dates == other.dates
            && self.tickers == other.tickers
            && cells_eq(&self.prices, &other.prices)
            && match (&self.market_caps, &other.market_caps) {
                (None, None) => true,
                (Some(a), Some(b)) => cells_eq(a, b),
                _ => false,
            }
    }
}

impl PricePanel {
    /// Validating constructor. `prices` is `(dates.len(), tickers.len())`
    /// with NaN marking missing cells.
    pub fn new(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        prices: Array2<f64>,
        market_caps: Option<Array2<f64>>,
    ) -> Result<Self> {
        if dates.is_empty() || tickers.is_empty() {
            return Err(Error::EmptyMatrix(
                "price panel has no dates or tickers".into(),
            ));
        }
        if prices.dim() != (dates.len(), tickers.len()) {
            return Err(Error::InvalidArgument(format!(
                "price matrix is {:?}, expected ({}, {})",
                prices.dim(),
                dates.len(),
                tickers.len()
            )));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::UnsortedDates {
                    earlier: w[0].to_string(),
                    later: w[1].to_string(),
                });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for t in &tickers {
            if !seen.insert(t.as_str()) {
                return Err(Error::DuplicateTicker(t.clone()));
            }
        }
        for ((t, i), &p) in prices.indexed_iter() {
            if p.is_nan() {
                continue;
            }
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::NonPositivePrice {
                    ticker: tickers[i].clone(),
                    date: dates[t].to_string(),
                    price: p,
                });
            }
        }
        for (i, t) in tickers.iter().enumerate() {
            if prices.column(i).iter().all(|p| p.is_nan()) {
                return Err(Error::InvalidArgument(format!("ticker {t} has no prices")));
            }
        }
        for (t, d) in dates.iter().enumerate() {
            if prices.row(t).iter().all(|p| p.is_nan()) {
                return Err(Error::InvalidArgument(format!("date {d} has no prices")));
            }
        }
        if let Some(caps) = &market_caps {
            if caps.dim() != prices.dim() {
                return Err(Error::InvalidArgument(
                    "market cap matrix shape differs from price matrix".into(),
                ));
            }
            for ((t, i), &c) in caps.indexed_iter() {
                if c.is_nan() {
                    continue;
                }
                if !(c.is_finite() && c > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "non-positive market cap {c}"
                    )));
                }
                // a cap without a price is unrepresentable in the row format
                if prices[[t, i]].is_nan() {
                    return Err(Error::InvalidArgument(format!(
                        "market cap without price for {} on {}",
                        tickers[i], dates[t]
                    )));
                }
            }
        }
        Ok(Self {
            dates,
            tickers,
            prices,
            market_caps,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    /// Price at `(date index, asset index)`, `None` when missing.
    pub fn price(&self, t: usize, i: usize) -> Option<f64> {
        let p = self.prices[[t, i]];
        (!p.is_nan()).then_some(p)
    }

    /// Most recent price at or before date index `t`, `None` if the asset
    /// has not traded yet.
    pub fn price_with_ffill(&self, t: usize, i: usize) -> Option<f64> {
        (0..=t).rev().find_map(|s| self.price(s, i))
    }

    pub fn has_market_caps(&self) -> bool {
        self.market_caps.is_some()
    }

    /// Market cap at `(date index, asset index)`, `None` when absent.
    pub fn market_cap(&self, t: usize, i: usize) -> Option<f64> {
        let c = self.market_caps.as_ref()?[[t, i]];
        (!c.is_nan()).then_some(c)
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Column indices of tickers with a price on every date in
    /// `[start, end]` (inclusive row range).
    pub fn complete_tickers(&self, start: usize, end: usize) -> Vec<usize> {
        (0..self.n_assets())
            .filter(|&i| (start..=end).all(|t| !self.prices[[t, i]].is_nan()))
            .collect()
    }

    /// Reorder columns lexicographically by ticker.
    ///
    /// [`load_prices`] discovers tickers in first-appearance order, which
    /// depends on which assets trade on the earliest dates; sorting gives a
    /// canonical order independent of that.
    pub fn sort_tickers(&mut self) {
        let mut order: Vec<usize> = (0..self.n_assets()).collect();
        order.sort_by(|&a, &b| self.tickers[a].cmp(&self.tickers[b]));
        self.tickers = order.iter().map(|&i| self.tickers[i].clone()).collect();
        self.prices = Array2::from_shape_fn(self.prices.dim(), |(t, j)| self.prices[[t, order[j]]]);
        self.market_caps = self
            .market_caps
            .as_ref()
            .map(|caps| Array2::from_shape_fn(caps.dim(), |(t, j)| caps[[t, order[j]]]));
    }

    /// Sub-panel over the inclusive row range, keeping only tickers with
    /// complete prices inside it.
    pub fn window(&self, start: usize, end: usize) -> Result<PricePanel> {
        if end >= self.n_dates() || start > end {
            return Err(Error::InvalidArgument(format!(
                "window [{start}, {end}] out of range for {} dates",
                self.n_dates()
            )));
        }
        let keep = self.complete_tickers(start, end);
        if keep.is_empty() {
            return Err(Error::EmptyUniverse(self.dates[end].to_string()));
        }
        let dates = self.dates[start..=end].to_vec();
        let tickers: Vec<String> = keep.iter().map(|&i| self.tickers[i].clone()).collect();
        let prices = Array2::from_shape_fn((dates.len(), keep.len()), |(t, j)| {
            self.prices[[start + t, keep[j]]]
        });
        let market_caps = self.market_caps.as_ref().map(|caps| {
            Array2::from_shape_fn((dates.len(), keep.len()), |(t, j)| {
                caps[[start + t, keep[j]]]
            })
        });
        PricePanel::new(dates, tickers, prices, market_caps)
    }
}

fn parse_date(s: &str, path: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Malformed {
        path: path.to_string(),
        line,
        msg: format!("bad date {s:?}: {e}"),
    })
}

fn parse_number(s: &str, what: &str, path: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Malformed {
        path: path.to_string(),
        line,
        msg: format!("bad {what} {s:?}: {e}"),
    })
}

/// Load a long-format price CSV (`date,ticker,adj_close[,market_cap]`).
///
/// Rows must be grouped by date in increasing order; a date that reappears
/// after a later one is rejected as unsorted. Duplicate `(date, ticker)`
/// rows are rejected.
pub fn load_prices<P: AsRef<Path>>(path: P) -> Result<PricePanel> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_caps = match cols.as_slice() {
        ["date", "ticker", "adj_close"] => false,
        ["date", "ticker", "adj_close", "market_cap"] => true,
        _ => {
            return Err(Error::Malformed {
                path: path_str,
                line: 1,
                msg: format!(
                    "expected header date,ticker,adj_close[,market_cap], found {:?}",
                    cols.join(",")
                ),
            })
        }
    };

    struct Row {
        date: NaiveDate,
        ticker: String,
        price: f64,
        cap: Option<f64>,
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut tickers: Vec<String> = Vec::new();
    let mut ticker_ix: std::collections::HashMap<String, usize> = std::collections::HashMap::new();

    for (ln, record) in reader.records().enumerate() {
        let line = ln + 2; // header is line 1
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Malformed {
                path: path_str,
                line,
                msg: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let date = parse_date(&record[0], &path_str, line)?;
        let ticker = record[1].to_string();
        let price = parse_number(&record[2], "price", &path_str, line)?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::NonPositivePrice {
                ticker,
                date: date.to_string(),
                price,
            });
        }
        let cap = if has_caps {
            let raw = record[3].trim();
            if raw.is_empty() {
                None
            } else {
                Some(parse_number(raw, "market cap", &path_str, line)?)
            }
        } else {
            None
        };

        match dates.last() {
            Some(&last) if date < last => {
                return Err(Error::UnsortedDates {
                    earlier: last.to_string(),
                    later: date.to_string(),
                })
            }
            Some(&last) if date > last => dates.push(date),
            None => dates.push(date),
            _ => {}
        }
        if !ticker_ix.contains_key(&ticker) {
            ticker_ix.insert(ticker.clone(), tickers.len());
            tickers.push(ticker.clone());
        }
        rows.push(Row {
            date,
            ticker,
            price,
            cap,
        });
    }

    if rows.is_empty() {
        return Err(Error::EmptyMatrix(format!("{path_str} has no data rows")));
    }

    let date_ix: std::collections::HashMap<NaiveDate, usize> =
        dates.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    let mut prices = Array2::from_elem((dates.len(), tickers.len()), f64::NAN);
    let mut caps = has_caps.then(|| Array2::from_elem((dates.len(), tickers.len()), f64::NAN));
    for row in rows {
        let t = date_ix[&row.date];
        let i = ticker_ix[&row.ticker];
        if !prices[[t, i]].is_nan() {
            return Err(Error::DuplicateRow {
                date: row.date.to_string(),
                ticker: row.ticker,
            });
        }
        prices[[t, i]] = row.price;
        if let (Some(caps), Some(c)) = (caps.as_mut(), row.cap) {
            caps[[t, i]] = c;
        }
    }

    PricePanel::new(dates, tickers, prices, caps)
}

/// Load a benchmark series (`date,level`) as a one-column panel.
pub fn load_benchmark<P: AsRef<Path>>(path: P) -> Result<PricePanel> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["date", "level"] {
        return Err(Error::Malformed {
            path: path_str,
            line: 1,
            msg: format!("expected header date,level, found {:?}", cols.join(",")),
        });
    }
    let mut dates = Vec::new();
    let mut levels = Vec::new();
    for (ln, record) in reader.records().enumerate() {
        let line = ln + 2;
        let record = record?;
        let date = parse_date(&record[0], &path_str, line)?;
        let level = parse_number(&record[1], "level", &path_str, line)?;
        if !(level.is_finite() && level > 0.0) {
            return Err(Error::NonPositivePrice {
                ticker: "index".into(),
                date: date.to_string(),
                price: level,
            });
        }
        if let Some(&last) = dates.last() {
            if date <= last {
                return Err(Error::UnsortedDates {
                    earlier: last.to_string(),
                    later: date.to_string(),
                });
            }
        }
        dates.push(date);
        levels.push(level);
    }
    if dates.is_empty() {
        return Err(Error::EmptyMatrix(format!("{path_str} has no data rows")));
    }
    let n = dates.len();
    PricePanel::new(
        dates,
        vec!["index".to_string()],
        Array2::from_shape_vec((n, 1), levels).expect("shape"),
        None,
    )
}

/// Write a panel in the long CSV layout. Inverse of [`load_prices`] for
/// valid panels: prices use the shortest exact decimal representation.
pub fn write_prices<P: AsRef<Path>>(panel: &PricePanel, path: P) -> Result<()> {
    let mut out = String::new();
    let caps = panel.market_caps.is_some();
    out.push_str(if caps {
        "date,ticker,adj_close,market_cap\n"
    } else {
        "date,ticker,adj_close\n"
    });
    for (t, date) in panel.dates.iter().enumerate() {
        for (i, ticker) in panel.tickers.iter().enumerate() {
            let Some(p) = panel.price(t, i) else { continue };
            if caps {
                match panel.market_cap(t, i) {
                    Some(c) => writeln!(out, "{date},{ticker},{p},{c}").expect("string write"),
                    None => writeln!(out, "{date},{ticker},{p},").expect("string write"),
                }
            } else {
                writeln!(out, "{date},{ticker},{p}").expect("string write");
            }
        }
    }
    write_atomic(path.as_ref(), &out)
}

/// Write a one-column panel as a benchmark series (`date,level`).
pub fn write_benchmark<P: AsRef<Path>>(panel: &PricePanel, path: P) -> Result<()> {
    if panel.n_assets() != 1 {
        return Err(Error::InvalidArgument(format!(
            "benchmark panel must have one column, found {}",
            panel.n_assets()
        )));
    }
    let mut out = String::from("date,level\n");
    for (t, date) in panel.dates.iter().enumerate() {
        let level = panel.price(t, 0).ok_or_else(|| Error::MissingPrice {
            ticker: "index".into(),
            date: date.to_string(),
        })?;
        writeln!(out, "{date},{level}").expect("string write");
    }
    write_atomic(path.as_ref(), &out)
}

/// Write the `ticker,group_id` mapping of a toy dataset.
pub fn write_groups<P: AsRef<Path>>(tickers: &[String], labels: &[usize], path: P) -> Result<()> {
    if tickers.len() != labels.len() {
        return Err(Error::InvalidArgument(
            "tickers and group labels differ in length".into(),
        ));
    }
    let mut out = String::from("ticker,group_id\n");
    for (t, g) in tickers.iter().zip(labels) {
        writeln!(out, "{t},{g}").expect("string write");
    }
    write_atomic(path.as_ref(), &out)
}

/// Aligned log-return matrix `X` and benchmark vector `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix<T> {
    x: Array2<T>,
    y: Array1<T>,
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
}

impl<T: Scalar> ReturnsMatrix<T> {
    /// Validating constructor.
    pub fn new(
        x: Array2<T>,
        y: Array1<T>,
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
    ) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::EmptyMatrix("returns matrix".into()));
        }
        if x.nrows() != y.len() || x.nrows() != dates.len() {
            return Err(Error::InvalidArgument(format!(
                "X has {} rows, y has {}, dates has {}",
                x.nrows(),
                y.len(),
                dates.len()
            )));
        }
        if x.ncols() != tickers.len() {
            return Err(Error::InvalidArgument(format!(
                "X has {} columns, tickers has {}",
                x.ncols(),
                tickers.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("returns matrix".into()));
        }
        Ok(Self {
            x,
            y,
            dates,
            tickers,
        })
    }

    pub fn x(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, T> {
        self.y.view()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// Number of return observations `D`.
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    /// Number of assets `N`.
    pub fn n_assets(&self) -> usize {
        self.x.ncols()
    }

    /// Restriction to the given columns, in the given order.
    pub fn column_subset(&self, ids: &[usize]) -> Result<ReturnsMatrix<T>> {
        if ids.is_empty() {
            return Err(Error::EmptyMatrix("column subset".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.n_assets()) {
            return Err(Error::InvalidArgument(format!(
                "column {bad} out of range for {} assets",
                self.n_assets()
            )));
        }
        let x = Array2::from_shape_fn((self.n_obs(), ids.len()), |(t, j)| self.x[[t, ids[j]]]);
        let tickers = ids.iter().map(|&i| self.tickers[i].clone()).collect();
        ReturnsMatrix::new(x, self.y.clone(), self.dates.clone(), tickers)
    }

    /// Split rows into `[0, at)` and `[at, D)`, e.g. train/test.
    pub fn split_rows(&self, at: usize) -> Result<(ReturnsMatrix<T>, ReturnsMatrix<T>)> {
        if at == 0 || at >= self.n_obs() {
            return Err(Error::InvalidArgument(format!(
                "split point {at} out of range for {} rows",
                self.n_obs()
            )));
        }
        let head = ReturnsMatrix::new(
            self.x.slice(ndarray::s![..at, ..]).to_owned(),
            self.y.slice(ndarray::s![..at]).to_owned(),
            self.dates[..at].to_vec(),
            self.tickers.clone(),
        )?;
        let tail = ReturnsMatrix::new(
            self.x.slice(ndarray::s![at.., ..]).to_owned(),
            self.y.slice(ndarray::s![at..]).to_owned(),
            self.dates[at..].to_vec(),
            self.tickers.clone(),
        )?;
        Ok((head, tail))
    }
}

/// Log returns of a complete panel against a one-column benchmark panel.
///
/// `X[t][i] = ln(price[t+1][i] / price[t][i])`, likewise `y` from the
/// benchmark; `D = #dates − 1`.
pub fn compute_log_returns<T: Scalar>(
    panel: &PricePanel,
    benchmark: &PricePanel,
) -> Result<ReturnsMatrix<T>> {
    if benchmark.n_assets() != 1 {
        return Err(Error::InvalidArgument(format!(
            "benchmark panel must have one column, found {}",
            benchmark.n_assets()
        )));
    }
    if panel.dates != benchmark.dates {
        return Err(Error::DateAxisMismatch(format!(
            "panel has {} dates starting {}, benchmark has {} starting {}",
            panel.n_dates(),
            panel.dates[0],
            benchmark.n_dates(),
            benchmark.dates[0]
        )));
    }
    if panel.n_dates() < 2 {
        return Err(Error::InsufficientHistory(
            "need at least two dates to form returns".into(),
        ));
    }
    let d = panel.n_dates() - 1;
    let n = panel.n_assets();
    let mut x = Array2::zeros((d, n));
    for t in 0..d {
        for i in 0..n {
            let p0 = panel.price(t, i).ok_or_else(|| Error::MissingPrice {
                ticker: panel.tickers[i].clone(),
                date: panel.dates[t].to_string(),
            })?;
            let p1 = panel.price(t + 1, i).ok_or_else(|| Error::MissingPrice {
                ticker: panel.tickers[i].clone(),
                date: panel.dates[t + 1].to_string(),
            })?;
            x[[t, i]] = real::<T>((p1 / p0).ln());
        }
    }
    let mut y = Array1::zeros(d);
    for t in 0..d {
        let p0 = benchmark.price(t, 0).expect("validated complete benchmark");
        let p1 = benchmark
            .price(t + 1, 0)
            .expect("validated complete benchmark");
        y[t] = real::<T>((p1 / p0).ln());
    }
    ReturnsMatrix::new(x, y, panel.dates[1..].to_vec(), panel.tickers.clone())
}

/// `count` consecutive business days (Mon-Fri) starting at or after `start`.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

/// Last business day strictly before `date`.
pub fn prev_business_day(date: NaiveDate) -> NaiveDate {
    let mut d = date.pred_opt().expect("date underflow");
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d.pred_opt().expect("date underflow");
    }
    d
}
