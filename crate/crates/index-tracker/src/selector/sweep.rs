//! Seed sweeps: the same fit repeated under different random seeds.
//!
//! Stochastic selection varies run to run, so point estimates are reported
//! together with the spread across seeds: per-iteration loss bands and the
//! coefficient of variation of the final in-sample MSE.

use super::{portfolio_from_outcome, train, FitOptions};
use crate::error::{Error, Result};
use crate::market_data::ReturnsMatrix;
use crate::portfolio::FittedPortfolio;
use crate::scalar::{real, Scalar};
use rayon::prelude::*;
use serde::Serialize;

/// One fit of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRun<T> {
    pub seed: u64,
    pub portfolio: FittedPortfolio<T>,
    /// Per-iteration training losses.
    pub losses: Vec<T>,
}

/// All runs of a sweep plus per-iteration aggregates.
#[derive(Debug, Clone)]
pub struct SweepResult<T> {
    pub runs: Vec<SweepRun<T>>,
    /// Mean training loss at each iteration, across seeds.
    pub mean_losses: Vec<T>,
    /// Sample standard deviation of the training loss at each iteration.
    pub std_losses: Vec<T>,
}

impl<T: Scalar> SweepResult<T> {
    /// Final in-sample MSE of each run, in seed order.
    pub fn final_mses(&self) -> Vec<T> {
        self.runs
            .iter()
            .map(|r| r.portfolio.in_sample_mse)
            .collect()
    }

    /// Sample-std over mean of the final in-sample MSEs.
    pub fn coefficient_of_variation(&self) -> Result<T> {
        let finals = self.final_mses();
        let (mean, std) = mean_std(&finals);
        if !(mean.is_finite() && mean > T::zero()) {
            return Err(Error::UndefinedMetric(format!(
                "coefficient of variation needs a positive mean MSE, got {mean}"
            )));
        }
        Ok(std / mean)
    }
}

fn mean_std<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = real::<T>(xs.len() as f64);
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    (mean, var.sqrt())
}

/// Fit the same returns once per seed, in parallel.
///
/// Each run uses `opts` with only the seed replaced, so every loss trace has
/// the same length and the bands are well defined. At least two seeds are
/// required, otherwise the standard deviation is meaningless.
pub fn sweep_seeds<T: Scalar + Serialize>(
    returns: &ReturnsMatrix<T>,
    opts: &FitOptions,
    seeds: &[u64],
) -> Result<SweepResult<T>> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a sweep needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let runs: Vec<SweepRun<T>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut opts = opts.clone();
            opts.train.seed = seed;
            let outcome = train(returns.x(), returns.y(), &opts.train)?;
            let portfolio = portfolio_from_outcome(returns, &opts, &outcome)?;
            Ok(SweepRun {
                seed,
                portfolio,
                losses: outcome.losses,
            })
        })
        .collect::<Result<_>>()?;

    let iters = runs[0].losses.len();
    let mut mean_losses = Vec::with_capacity(iters);
    let mut std_losses = Vec::with_capacity(iters);
    for i in 0..iters {
        let column: Vec<T> = runs.iter().map(|r| r.losses[i]).collect();
        let (mean, std) = mean_std(&column);
        mean_losses.push(mean);
        std_losses.push(std);
    }
    Ok(SweepResult {
        runs,
        mean_losses,
        std_losses,
    })
}
