//! Error type shared across the library.

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed input at {path} line {line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("non-positive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        price: f64,
    },

    #[error("unsorted dates: {later} appears after {earlier}")]
    UnsortedDates { earlier: String, later: String },

    #[error("duplicate ticker {0}")]
    DuplicateTicker(String),

    #[error("duplicate row for ({date}, {ticker})")]
    DuplicateRow { date: String, ticker: String },

    #[error("date axis mismatch: {0}")]
    DateAxisMismatch(String),

    #[error("missing price for {ticker} on {date}")]
    MissingPrice { ticker: String, date: String },

    #[error("missing market cap for {ticker}: {detail}")]
    MissingMarketCap { ticker: String, detail: String },

    #[error("empty matrix: {0}")]
    EmptyMatrix(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at iteration {iteration}: {msg}")]
    Diverged { iteration: usize, msg: String },

    #[error("combinatorial guard exceeded: C({n}, {k}) > {limit}")]
    TooManySubsets { n: usize, k: usize, limit: u64 },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("universe empty after missing-data exclusion on {0}")]
    EmptyUniverse(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}
