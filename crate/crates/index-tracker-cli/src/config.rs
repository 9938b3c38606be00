//! The run configuration document.
//!
//! Backtests and sweeps multiply parameters (methods x K x seeds), so they
//! are driven by a single TOML file instead of flag soup:
//!
//! ```toml
//! output_dir = "runs/sp100"        # optional, see resolve_output_dir
//!
//! [data]
//! prices = "data/prices.csv"       # long layout: date,ticker,adj_close[,market_cap]
//! benchmark = "data/benchmark.csv" # date,level
//!
//! [grid]
//! k = [30, 40, 50]
//! methods = ["ours", "forward", "backward", "cap", "qp"]
//!
//! [fit]                            # optional; selector options
//! refine = true
//! [fit.train]
//! iterations = 2000
//! learning_rate = 0.05
//!
//! [backtest]                       # optional; engine parameters
//! train_window = 750
//! rebalance_rule = "quarter_end"
//! fee_per_trade = 5.0
//! initial_capital = 1000000.0
//! seed = 42
//!
//! [sweep]                          # optional; seed-sweep parameters
//! n_seeds = 100
//! base_seed = 0
//! ```
//!
//! Every referenced path must exist at load time; K values must be >= 1.

use anyhow::{bail, Context};
use index_tracker::backtest::{BacktestConfig, Method, RebalanceRule};
use index_tracker::baselines::BaselineOptions;
use index_tracker::selector::FitOptions;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Strategy names as they appear in configs and on `--method`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
pub enum MethodName {
    /// Stochastic selector with QP refinement.
    #[serde(rename = "ours", alias = "stochastic")]
    #[value(alias = "stochastic")]
    Ours,
    /// Forward selection by repeated max-weight peeling.
    #[serde(rename = "forward", alias = "forward_selection")]
    #[value(alias = "forward_selection")]
    Forward,
    /// Backward elimination.
    #[serde(rename = "backward", alias = "backward_selection")]
    #[value(alias = "backward_selection")]
    Backward,
    /// Largest market capitalisation.
    #[serde(rename = "cap", alias = "largest_cap")]
    #[value(alias = "largest_cap")]
    Cap,
    /// Dense QP without a cardinality constraint.
    #[serde(rename = "qp", alias = "dense_qp")]
    #[value(alias = "dense_qp")]
    Qp,
}

impl MethodName {
    /// Canonical name, used in file names and report rows.
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Ours => "stochastic",
            MethodName::Forward => "forward_selection",
            MethodName::Backward => "backward_selection",
            MethodName::Cap => "largest_cap",
            MethodName::Qp => "dense_qp",
        }
    }

    pub fn to_method(self, fit: &FitOptions) -> Method {
        let baseline = BaselineOptions {
            qp_tol: fit.qp_tol,
            qp_max_iter: fit.qp_max_iter,
        };
        match self {
            MethodName::Ours => Method::Stochastic {
                options: fit.clone(),
            },
            MethodName::Forward => Method::ForwardSelection { options: baseline },
            MethodName::Backward => Method::BackwardSelection { options: baseline },
            MethodName::Cap => Method::LargestCap { options: baseline },
            MethodName::Qp => Method::DenseQp { options: baseline },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub prices: PathBuf,
    pub benchmark: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub k: Vec<usize>,
    pub methods: Vec<MethodName>,
}

/// Engine parameters shared by every (method, K) pair of a backtest run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub train_window: usize,
    pub rebalance_rule: RebalanceRule,
    pub fee_per_trade: f64,
    pub initial_capital: f64,
    pub seed: u64,
}

impl Default for BacktestSection {
    fn default() -> Self {
        let defaults = BacktestConfig::default();
        Self {
            train_window: defaults.train_window,
            rebalance_rule: defaults.rebalance_rule,
            fee_per_trade: defaults.fee_per_trade,
            initial_capital: defaults.initial_capital,
            seed: defaults.seed,
        }
    }
}

impl BacktestSection {
    pub fn to_config(&self, k: usize, method: Method) -> BacktestConfig {
        BacktestConfig {
            train_window: self.train_window,
            rebalance_rule: self.rebalance_rule,
            fee_per_trade: self.fee_per_trade,
            initial_capital: self.initial_capital,
            k,
            method,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n_seeds: usize,
    /// Seeds are `base_seed .. base_seed + n_seeds`.
    pub base_seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n_seeds: 100,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DataPaths,
    pub grid: Grid,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub backtest: BacktestSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl RunConfig {
    /// Parse and validate a config file. Relative data paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.data.prices = resolve(base, &config.data.prices);
        config.data.benchmark = resolve(base, &config.data.benchmark);
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> anyhow::Result<()> {
        for path in [&self.data.prices, &self.data.benchmark] {
            if !path.is_file() {
                bail!("data file {} does not exist", path.display());
            }
        }
        if self.grid.k.is_empty() {
            bail!("grid.k must list at least one K");
        }
        if let Some(&k) = self.grid.k.iter().find(|&&k| k == 0) {
            bail!("grid.k entries must be >= 1, found {k}");
        }
        if self.grid.methods.is_empty() {
            bail!("grid.methods must list at least one method");
        }
        if self.sweep.n_seeds < 2 {
            bail!("sweep.n_seeds must be >= 2, found {}", self.sweep.n_seeds);
        }
        Ok(())
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Output directory precedence: `--out` flag, then the config file, then
/// `$INDEX_TRACKER_OUT`, then `./runs`.
pub fn resolve_output_dir(flag: Option<&Path>, from_config: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = from_config {
        return dir.to_path_buf();
    }
    if let Some(dir) = std::env::var_os("INDEX_TRACKER_OUT") {
        return PathBuf::from(dir);
    }
    PathBuf::from("runs")
}
