//! Sparse index-tracking portfolios.
//!
//! The library fits tracking portfolios that replicate a benchmark index
//! with at most `K` assets. Selection and allocation are optimised jointly
//! by a stochastic reparametrisation trained with first-order methods
//! ([`selector`]), optionally refined by a simplex-constrained least-squares
//! solve ([`qp`]). Classic selection baselines ([`baselines`]) and a
//! quarterly-rebalance backtesting engine with flat per-trade fees
//! ([`backtest`]) round out the toolkit.
//!
//! The numeric core is generic over the scalar type via [`scalar::Scalar`];
//! the aliases below pin the common `f64` instantiation.

pub mod backtest;
pub mod baselines;
pub mod error;
mod io_util;
pub mod market_data;
pub mod portfolio;
pub mod qp;
pub mod rng;
pub mod scalar;
pub mod selector;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Log-return design matrix and target at the default precision.
pub type ReturnsMatrix = market_data::ReturnsMatrix<f64>;
/// Fitted sparse portfolio at the default precision.
pub type FittedPortfolio = portfolio::FittedPortfolio<f64>;
/// Toy dataset at the default precision.
pub type ToyDataset = market_data::ToyDataset<f64>;
