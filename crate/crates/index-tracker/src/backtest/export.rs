//! CSV and JSON serialisation of backtest results.
//!
//! Currency columns are written with six fractional digits; the percentage
//! error column uses the shortest exact decimal representation. Both forms
//! survive a write-read-write cycle byte-identically.

use super::{BacktestResult, MetricsReport, RebalanceEvent};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use chrono::NaiveDate;
use std::fmt::Write as _;
use std::path::Path;

/// One parsed `equity.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityRow {
    pub date: NaiveDate,
    pub tracker_value: f64,
    pub index_value: f64,
    pub pe: f64,
}

/// One parsed `events.csv` row (one trade).
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub date: NaiveDate,
    pub ticker: String,
    pub shares_delta: i64,
    pub fee: f64,
}

/// Write the daily curves as `date,tracker_value,index_value,pe`.
pub fn write_equity_csv<P: AsRef<Path>>(result: &BacktestResult, path: P) -> Result<()> {
    let rows: Vec<EquityRow> = result
        .dates
        .iter()
        .enumerate()
        .map(|(t, &date)| EquityRow {
            date,
            tracker_value: result.equity_curve[t],
            index_value: result.index_curve[t],
            pe: result.metrics.percentage_error[t],
        })
        .collect();
    write_equity_rows(&rows, path)
}

/// Write already materialised equity rows; [`write_equity_csv`] delegates
/// here, and a read-write cycle through [`read_equity_csv`] reproduces the
/// file byte for byte.
pub fn write_equity_rows<P: AsRef<Path>>(rows: &[EquityRow], path: P) -> Result<()> {
    let mut out = String::from("date,tracker_value,index_value,pe\n");
    for row in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{}",
            row.date, row.tracker_value, row.index_value, row.pe
        )
        .expect("string write");
    }
    write_atomic(path.as_ref(), &out)
}

/// Write one row per executed trade as `date,ticker,shares_delta,fee`.
pub fn write_events_csv<P: AsRef<Path>>(events: &[RebalanceEvent], path: P) -> Result<()> {
    let rows: Vec<EventRow> = events
        .iter()
        .flat_map(|event| {
            event.trades.iter().map(|trade| EventRow {
                date: event.date,
                ticker: trade.ticker.clone(),
                shares_delta: trade.shares_delta,
                fee: trade.fee,
            })
        })
        .collect();
    write_event_rows(&rows, path)
}

/// Write already materialised trade rows; the events counterpart of
/// [`write_equity_rows`].
pub fn write_event_rows<P: AsRef<Path>>(rows: &[EventRow], path: P) -> Result<()> {
    let mut out = String::from("date,ticker,shares_delta,fee\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{},{:.6}",
            row.date, row.ticker, row.shares_delta, row.fee
        )
        .expect("string write");
    }
    write_atomic(path.as_ref(), &out)
}

/// Write the metrics report as pretty JSON.
pub fn write_metrics_json<P: AsRef<Path>>(metrics: &MetricsReport, path: P) -> Result<()> {
    let json = serde_json::to_string_pretty(metrics)
        .map_err(|e| Error::InvalidArgument(format!("metrics serialization: {e}")))?;
    write_atomic(path.as_ref(), &json)
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str, path: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| Error::Malformed {
        path: path.to_string(),
        line,
        msg: format!("bad {what} {s:?}: {e}"),
    })
}

/// Read an `equity.csv` written by [`write_equity_csv`].
pub fn read_equity_csv<P: AsRef<Path>>(path: P) -> Result<Vec<EquityRow>> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers: Vec<&str> = reader.headers()?.iter().collect();
    if headers != ["date", "tracker_value", "index_value", "pe"] {
        return Err(Error::Malformed {
            path: path_str,
            line: 1,
            msg: format!("unexpected header {:?}", headers.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (ln, record) in reader.records().enumerate() {
        let line = ln + 2;
        let record = record?;
        rows.push(EquityRow {
            date: parse_field(&record[0], "date", &path_str, line)?,
            tracker_value: parse_field(&record[1], "tracker value", &path_str, line)?,
            index_value: parse_field(&record[2], "index value", &path_str, line)?,
            pe: parse_field(&record[3], "percentage error", &path_str, line)?,
        });
    }
    Ok(rows)
}

/// Read an `events.csv` written by [`write_events_csv`].
pub fn read_events_csv<P: AsRef<Path>>(path: P) -> Result<Vec<EventRow>> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers: Vec<&str> = reader.headers()?.iter().collect();
    if headers != ["date", "ticker", "shares_delta", "fee"] {
        return Err(Error::Malformed {
            path: path_str,
            line: 1,
            msg: format!("unexpected header {:?}", headers.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (ln, record) in reader.records().enumerate() {
        let line = ln + 2;
        let record = record?;
        rows.push(EventRow {
            date: parse_field(&record[0], "date", &path_str, line)?,
            ticker: record[1].to_string(),
            shares_delta: parse_field(&record[2], "shares delta", &path_str, line)?,
            fee: parse_field(&record[3], "fee", &path_str, line)?,
        });
    }
    Ok(rows)
}
