//! Synthetic grouped-asset datasets.
//!
//! The generator builds `n_groups` independent base return series and a
//! universe of noisy duplicates of them, so the ground truth is known: a
//! perfect tracker holds one asset per group. The benchmark is the exact
//! equal-weight average of the base series, before duplication noise.

use super::{business_days, prev_business_day, PricePanel, ReturnsMatrix};
use crate::error::{Error, Result};
use crate::rng::seeded_rng;
use crate::scalar::{real, Scalar};
use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// First return date of every toy dataset (a Monday).
const TOY_EPOCH: (i32, u32, u32) = (2010, 1, 4);

/// Parameters of the synthetic grouped universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    /// Number of independent base series.
    pub n_groups: usize,
    /// Return observations per series.
    pub series_length: usize,
    /// Inclusive range of duplicates per group.
    pub dup_range: (usize, usize),
    /// Standard deviation of the base series.
    pub base_scale: f64,
    /// Standard deviation of per-duplicate noise.
    pub noise_scale: f64,
    /// Root seed for the dataset.
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            n_groups: 5,
            series_length: 750,
            dup_range: (50, 200),
            base_scale: 0.01,
            noise_scale: 0.001,
            seed: 42,
        }
    }
}

impl ToySpec {
    fn validate(&self) -> Result<()> {
        if self.n_groups == 0 {
            return Err(Error::InvalidArgument("n_groups must be positive".into()));
        }
        if self.series_length == 0 {
            return Err(Error::InvalidArgument(
                "series_length must be positive".into(),
            ));
        }
        let (lo, hi) = self.dup_range;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "dup_range ({lo}, {hi}) must satisfy 1 <= lo <= hi"
            )));
        }
        if !(self.base_scale.is_finite() && self.base_scale > 0.0) {
            return Err(Error::InvalidArgument("base_scale must be positive".into()));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::InvalidArgument(
                "noise_scale must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// A generated dataset together with its ground truth.
#[derive(Debug, Clone)]
pub struct ToyDataset<T> {
    /// Asset and benchmark log returns.
    pub returns: ReturnsMatrix<T>,
    /// Group id of each asset column.
    pub group_labels: Vec<usize>,
    /// Benchmark weight of each group's base series (uniform).
    pub true_weights: Array1<T>,
    /// Parameters the dataset was generated from.
    pub spec: ToySpec,
}

/// Generate a grouped toy dataset.
///
/// Randomness is drawn from `seeded_rng(spec.seed)` in a fixed order that
/// is part of the contract: first the base series (group-major, then time),
/// then one duplicate count per group, then per-asset noise (column-major,
/// then time). Noise draws happen even when `noise_scale` is zero, so the
/// group structure of a dataset does not depend on the noise level.
pub fn generate_toy<T: Scalar>(spec: &ToySpec) -> Result<ToyDataset<T>> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let d = spec.series_length;
    let g = spec.n_groups;

    let mut bases = Array2::<f64>::zeros((d, g));
    for group in 0..g {
        for t in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            bases[[t, group]] = spec.base_scale * z;
        }
    }

    let (lo, hi) = spec.dup_range;
    let counts: Vec<usize> = (0..g).map(|_| rng.random_range(lo..=hi)).collect();
    let n: usize = counts.iter().sum();

    let mut x = Array2::<T>::zeros((d, n));
    let mut group_labels = Vec::with_capacity(n);
    let mut col = 0;
    for (group, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for t in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                x[[t, col]] = real::<T>(bases[[t, group]] + spec.noise_scale * z);
            }
            group_labels.push(group);
            col += 1;
        }
    }

    let y = Array1::from_shape_fn(d, |t| {
        let mut sum = 0.0;
        for group in 0..g {
            sum += bases[[t, group]];
        }
        real::<T>(sum / g as f64)
    });
    let true_weights = Array1::from_elem(g, real::<T>(1.0 / g as f64));

    let (ey, em, ed) = TOY_EPOCH;
    let dates = business_days(NaiveDate::from_ymd_opt(ey, em, ed).expect("valid epoch"), d);
    let tickers = (0..n).map(|i| format!("A{i:04}")).collect();
    let returns = ReturnsMatrix::new(x, y, dates, tickers)?;

    Ok(ToyDataset {
        returns,
        group_labels,
        true_weights,
        spec: spec.clone(),
    })
}

impl<T: Scalar> ToyDataset<T> {
    /// Reconstruct price panels from the returns, for the CSV interfaces.
    ///
    /// Every series starts at `initial_price` one business day before the
    /// first return date; subsequent prices compound the log returns.
    pub fn to_price_panels(&self, initial_price: f64) -> Result<(PricePanel, PricePanel)> {
        if !(initial_price.is_finite() && initial_price > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "initial price {initial_price} must be positive"
            )));
        }
        let rm = &self.returns;
        let d = rm.n_obs();
        let n = rm.n_assets();
        let mut dates = Vec::with_capacity(d + 1);
        dates.push(prev_business_day(rm.dates()[0]));
        dates.extend_from_slice(rm.dates());

        let mut prices = Array2::<f64>::zeros((d + 1, n));
        for i in 0..n {
            prices[[0, i]] = initial_price;
            for t in 0..d {
                let r = rm.x()[[t, i]].to_f64().expect("scalar converts to f64");
                prices[[t + 1, i]] = prices[[t, i]] * r.exp();
            }
        }
        let mut levels = Array2::<f64>::zeros((d + 1, 1));
        levels[[0, 0]] = initial_price;
        for t in 0..d {
            let r = rm.y()[t].to_f64().expect("scalar converts to f64");
            levels[[t + 1, 0]] = levels[[t, 0]] * r.exp();
        }

        let assets = PricePanel::new(dates.clone(), rm.tickers().to_vec(), prices, None)?;
        let bench = PricePanel::new(dates, vec!["index".to_string()], levels, None)?;
        Ok((assets, bench))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::compute_log_returns;
    use approx::assert_abs_diff_eq;

    fn small_spec() -> ToySpec {
        ToySpec {
            n_groups: 3,
            series_length: 40,
            dup_range: (2, 5),
            base_scale: 0.01,
            noise_scale: 0.001,
            seed: 7,
        }
    }

    #[test]
    fn default_spec_dimensions() {
        let spec = ToySpec::default();
        let toy: ToyDataset<f64> = generate_toy(&spec).unwrap();
        assert_eq!(toy.returns.n_obs(), 750);
        let n = toy.returns.n_assets();
        assert!((5 * 50..=5 * 200).contains(&n), "N = {n}");
        assert_eq!(toy.group_labels.len(), n);
        assert_eq!(toy.true_weights.len(), 5);
        assert_eq!(toy.true_weights[0], 0.2);
        // group labels are a contiguous non-decreasing cover of 0..5
        assert!(toy.group_labels.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*toy.group_labels.last().unwrap(), 4);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = small_spec();
        let a: ToyDataset<f64> = generate_toy(&spec).unwrap();
        let b: ToyDataset<f64> = generate_toy(&spec).unwrap();
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.group_labels, b.group_labels);
        let c: ToyDataset<f64> = generate_toy(&ToySpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.returns, c.returns);
    }

    #[test]
    fn matches_documented_draw_order() {
        // independent replica of the documented draw sequence
        let spec = small_spec();
        let toy: ToyDataset<f64> = generate_toy(&spec).unwrap();

        let mut rng = crate::rng::seeded_rng(spec.seed);
        let (d, g) = (spec.series_length, spec.n_groups);
        let mut bases = vec![vec![0.0f64; d]; g];
        for base in bases.iter_mut() {
            for slot in base.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *slot = spec.base_scale * z;
            }
        }
        let counts: Vec<usize> = (0..g)
            .map(|_| rng.random_range(spec.dup_range.0..=spec.dup_range.1))
            .collect();
        let mut col = 0;
        for (group, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                for (t, base) in bases[group].iter().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    let expected = base + spec.noise_scale * z;
                    assert_eq!(toy.returns.x()[[t, col]], expected);
                }
                assert_eq!(toy.group_labels[col], group);
                col += 1;
            }
        }
        assert_eq!(col, toy.returns.n_assets());
    }

    #[test]
    fn zero_noise_benchmark_is_exact_group_mean() {
        let spec = ToySpec {
            noise_scale: 0.0,
            ..small_spec()
        };
        let toy: ToyDataset<f64> = generate_toy(&spec).unwrap();
        // with zero noise every column equals its group base, so the mean of
        // one representative per group reproduces y bitwise
        let mut reps = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, &g) in toy.group_labels.iter().enumerate() {
            if seen.insert(g) {
                reps.push(i);
            }
        }
        assert_eq!(reps.len(), spec.n_groups);
        for t in 0..toy.returns.n_obs() {
            let mean: f64 =
                reps.iter().map(|&i| toy.returns.x()[[t, i]]).sum::<f64>() / spec.n_groups as f64;
            assert_eq!(toy.returns.y()[t], mean);
        }
    }

    #[test]
    fn within_group_correlation_dominates() {
        let spec = small_spec();
        let toy: ToyDataset<f64> = generate_toy(&spec).unwrap();
        let corr = |a: usize, b: usize| {
            let xa = toy.returns.x().column(a).to_owned();
            let xb = toy.returns.x().column(b).to_owned();
            let ma = xa.mean().unwrap();
            let mb = xb.mean().unwrap();
            let cov: f64 = xa.iter().zip(&xb).map(|(p, q)| (p - ma) * (q - mb)).sum();
            let va: f64 = xa.iter().map(|p| (p - ma) * (p - ma)).sum();
            let vb: f64 = xb.iter().map(|q| (q - mb) * (q - mb)).sum();
            cov / (va * vb).sqrt()
        };
        let first_of = |g: usize| toy.group_labels.iter().position(|&x| x == g).unwrap();
        let g0 = first_of(0);
        let same = corr(g0, g0 + 1); // labels are contiguous per group
        assert_eq!(toy.group_labels[g0 + 1], 0);
        assert!(same > 0.9, "within-group correlation {same}");
        let cross = corr(g0, first_of(1));
        assert!(cross.abs() < 0.5, "cross-group correlation {cross}");
    }

    #[test]
    fn price_panels_round_trip_to_the_same_returns() {
        let toy: ToyDataset<f64> = generate_toy(&small_spec()).unwrap();
        let (assets, bench) = toy.to_price_panels(100.0).unwrap();
        assert_eq!(assets.n_dates(), toy.returns.n_obs() + 1);
        let rm: ReturnsMatrix<f64> = compute_log_returns(&assets, &bench).unwrap();
        assert_eq!(rm.dates(), toy.returns.dates());
        for (a, b) in rm.x().iter().zip(toy.returns.x().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in rm.y().iter().zip(toy.returns.y().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = ToySpec {
            n_groups: 0,
            ..ToySpec::default()
        };
        assert!(generate_toy::<f64>(&bad).is_err());
        let bad = ToySpec {
            dup_range: (5, 2),
            ..ToySpec::default()
        };
        assert!(generate_toy::<f64>(&bad).is_err());
        let bad = ToySpec {
            noise_scale: -0.1,
            ..ToySpec::default()
        };
        assert!(generate_toy::<f64>(&bad).is_err());
    }
}
