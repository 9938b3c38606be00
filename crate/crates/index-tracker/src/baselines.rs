//! Deterministic baseline selectors.
//!
//! Each baseline picks a support of at most `k` assets, solves the
//! constrained least-squares weights on that support, and packages the
//! result exactly like the stochastic selector, so downstream code treats
//! all methods uniformly.

use crate::error::{Error, Result};
use crate::market_data::ReturnsMatrix;
use crate::portfolio::FittedPortfolio;
use crate::qp::{self, SolveOptions};
use crate::scalar::{real, Scalar};
use crate::selector::loss;
use itertools::Itertools;
use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// QP settings shared by all baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineOptions {
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            qp_tol: 1e-8,
            qp_max_iter: 50_000,
        }
    }
}

fn check_k<T: Scalar>(returns: &ReturnsMatrix<T>, k: usize) -> Result<()> {
    if k == 0 || k > returns.n_assets() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside [1, n = {}]",
            returns.n_assets()
        )));
    }
    Ok(())
}

/// Constrained least-squares weights and in-sample MSE on a support.
fn solve_on_support<T: Scalar>(
    returns: &ReturnsMatrix<T>,
    ids: &[usize],
    opts: &BaselineOptions,
) -> Result<(Array1<T>, T)> {
    let sub = returns.column_subset(ids)?;
    let problem = qp::build_problem(sub.x(), sub.y())?;
    let solution = qp::solve(
        &problem,
        SolveOptions {
            tol: real::<T>(opts.qp_tol),
            max_iter: opts.qp_max_iter,
        },
    )?;
    let mse = loss(sub.x(), sub.y(), solution.w.view());
    Ok((solution.w, mse))
}

fn package<T: Scalar>(
    returns: &ReturnsMatrix<T>,
    ids: &[usize],
    weights: Array1<T>,
    mse: T,
    k_requested: usize,
    method: &str,
    opts: &BaselineOptions,
) -> Result<FittedPortfolio<T>> {
    let portfolio = FittedPortfolio {
        tickers: ids.iter().map(|&i| returns.tickers()[i].clone()).collect(),
        weights: weights.to_vec(),
        k_requested,
        k_effective: ids.len(),
        in_sample_mse: mse,
        seed: 0,
        method: method.into(),
        config: serde_json::json!({
            "qp_tol": opts.qp_tol,
            "qp_max_iter": opts.qp_max_iter,
        }),
    };
    portfolio.validate()?;
    Ok(portfolio)
}

/// Forward selection.
///
/// Repeatedly solves the constrained least squares on the still-unselected
/// universe and moves the largest-weight asset (ties to the lowest index)
/// into the selected list; selected assets take no part in later rounds.
/// The final weights come from one refit on the selected support alone.
/// Selection goes by weight magnitude, not by marginal fit, so on heavily
/// duplicated universes it can keep peeling substitutes of one group.
pub fn forward_selection<T: Scalar>(
    returns: &ReturnsMatrix<T>,
    k: usize,
    opts: &BaselineOptions,
) -> Result<FittedPortfolio<T>> {
    check_k(returns, k)?;
    let mut remaining: Vec<usize> = (0..returns.n_assets()).collect();
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    while selected.len() < k {
        let (weights, _) = solve_on_support(returns, &remaining, opts)?;
        let top = weights
            .iter()
            .enumerate()
            .max_by(|a, b| {
                a.1.partial_cmp(b.1)
                    .expect("finite weight")
                    .then(b.0.cmp(&a.0))
            })
            .expect("non-empty remaining universe")
            .0;
        selected.push(remaining.remove(top));
    }
    selected.sort_unstable();
    let (weights, mse) = solve_on_support(returns, &selected, opts)?;
    package(
        returns,
        &selected,
        weights,
        mse,
        k,
        "forward_selection",
        opts,
    )
}

/// Backward selection.
///
/// Starts from the full universe and repeatedly refits, dropping the
/// lowest-weight asset (ties to the lowest index) until `k` remain.
pub fn backward_selection<T: Scalar>(
    returns: &ReturnsMatrix<T>,
    k: usize,
    opts: &BaselineOptions,
) -> Result<FittedPortfolio<T>> {
    check_k(returns, k)?;
    let mut support: Vec<usize> = (0..returns.n_assets()).collect();
    let (mut weights, mut mse) = solve_on_support(returns, &support, opts)?;
    while support.len() > k {
        let drop_pos = weights
            .iter()
            .enumerate()
            .min_by(|a, b| {
                a.1.partial_cmp(b.1)
                    .expect("finite weight")
                    .then(a.0.cmp(&b.0))
            })
            .expect("non-empty support")
            .0;
        support.remove(drop_pos);
        let solved = solve_on_support(returns, &support, opts)?;
        weights = solved.0;
        mse = solved.1;
    }
    package(
        returns,
        &support,
        weights,
        mse,
        k,
        "backward_selection",
        opts,
    )
}

/// Top-`k` assets by market capitalisation, ties by ticker order, with
/// least-squares weights on that support.
pub fn largest_cap<T: Scalar>(
    returns: &ReturnsMatrix<T>,
    caps: &[f64],
    k: usize,
    opts: &BaselineOptions,
) -> Result<FittedPortfolio<T>> {
    check_k(returns, k)?;
    if caps.len() != returns.n_assets() {
        return Err(Error::InvalidArgument(format!(
            "{} caps for {} assets",
            caps.len(),
            returns.n_assets()
        )));
    }
    if let Some((i, &c)) = caps
        .iter()
        .enumerate()
        .find(|(_, c)| !(c.is_finite() && **c > 0.0))
    {
        return Err(Error::MissingMarketCap {
            ticker: returns.tickers()[i].clone(),
            detail: format!("cap {c}"),
        });
    }
    let mut order: Vec<usize> = (0..caps.len()).collect();
    // stable sort: equal caps keep ascending ticker order
    order.sort_by(|&a, &b| caps[b].partial_cmp(&caps[a]).expect("finite caps"));
    let mut ids: Vec<usize> = order[..k].to_vec();
    ids.sort_unstable();
    let (weights, mse) = solve_on_support(returns, &ids, opts)?;
    package(returns, &ids, weights, mse, k, "largest_cap", opts)
}

/// Cardinality-free constrained least squares over the whole universe.
///
/// The densest portfolio the QP admits; the contrast baseline showing how
/// many assets an unconstrained fit spreads over.
pub fn dense_qp<T: Scalar>(
    returns: &ReturnsMatrix<T>,
    opts: &BaselineOptions,
) -> Result<FittedPortfolio<T>> {
    let n = returns.n_assets();
    let ids: Vec<usize> = (0..n).collect();
    let (weights, mse) = solve_on_support(returns, &ids, opts)?;
    package(returns, &ids, weights, mse, n, "dense_qp", opts)
}

/// Number of `k`-subsets of `n` elements, saturating at `cap`.
fn binomial_capped(n: usize, k: usize, cap: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128;
        if result > cap {
            return cap + 1;
        }
    }
    result
}

/// Exact minimiser over all `k`-subsets, for small problems.
///
/// Refuses to run when the subset count exceeds `limit` (default guard:
/// one million).
pub fn exhaustive_oracle<T: Scalar>(
    returns: &ReturnsMatrix<T>,
    k: usize,
    limit: u64,
    opts: &BaselineOptions,
) -> Result<FittedPortfolio<T>> {
    check_k(returns, k)?;
    let n = returns.n_assets();
    let subsets = binomial_capped(n, k, limit as u128);
    if subsets > limit as u128 {
        return Err(Error::TooManySubsets { n, k, limit });
    }
    let best = (0..n)
        .combinations(k)
        .par_bridge()
        .map(|ids| {
            let (w, mse) = solve_on_support(returns, &ids, opts)?;
            Ok((ids, w, mse))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min_by(|a, b| {
            a.2.partial_cmp(&b.2)
                .expect("finite mse")
                .then_with(|| a.0.cmp(&b.0))
        })
        .expect("at least one subset");
    let (ids, weights, mse) = best;
    package(returns, &ids, weights, mse, k, "exhaustive", opts)
}
