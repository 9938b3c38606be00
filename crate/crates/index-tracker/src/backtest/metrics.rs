//! Performance measures over equity curves.

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};
use serde::{Deserialize, Serialize};

/// Element-wise percentage error `(tracker - index) / index` of two aligned
/// curves.
pub fn percentage_error<T: Scalar>(tracker: &[T], index: &[T]) -> Result<Vec<T>> {
    if tracker.len() != index.len() {
        return Err(Error::InvalidArgument(format!(
            "curves differ in length: {} vs {}",
            tracker.len(),
            index.len()
        )));
    }
    index
        .iter()
        .zip(tracker)
        .map(|(&i, &t)| {
            if i == T::zero() {
                Err(Error::UndefinedMetric(
                    "percentage error at zero index value".into(),
                ))
            } else {
                Ok((t - i) / i)
            }
        })
        .collect()
}

/// Simple returns between consecutive anchor points of a curve.
pub fn returns_between<T: Scalar>(curve: &[T], anchors: &[usize]) -> Result<Vec<T>> {
    for w in anchors.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(
                "anchors must be strictly increasing".into(),
            ));
        }
    }
    if let Some(&last) = anchors.last() {
        if last >= curve.len() {
            return Err(Error::InvalidArgument(format!(
                "anchor {last} out of range for curve of length {}",
                curve.len()
            )));
        }
    }
    Ok(anchors
        .windows(2)
        .map(|w| curve[w[1]] / curve[w[0]] - T::one())
        .collect())
}

/// Sample standard deviation (divisor `n - 1`).
pub fn volatility<T: Scalar>(returns: &[T]) -> Result<T> {
    if returns.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "volatility needs at least 2 returns, got {}",
            returns.len()
        )));
    }
    let n = real::<T>(returns.len() as f64);
    let mean = returns.iter().copied().sum::<T>() / n;
    let ss = returns.iter().map(|&r| (r - mean) * (r - mean)).sum::<T>();
    Ok((ss / (n - T::one())).sqrt())
}

/// Mean return over its standard deviation, unannualised and with no
/// risk-free adjustment. Zero volatility is undefined rather than infinite.
pub fn sharpe<T: Scalar>(returns: &[T]) -> Result<T> {
    let vol = volatility(returns)?;
    if vol == T::zero() {
        return Err(Error::UndefinedMetric(
            "sharpe of a constant return series".into(),
        ));
    }
    let mean = returns.iter().copied().sum::<T>() / real::<T>(returns.len() as f64);
    Ok(mean / vol)
}

/// Worst peak-to-trough decline `min_t (V_t - peak_t) / peak_t`, in
/// `[-1, 0]` for positive curves.
pub fn max_drawdown<T: Scalar>(curve: &[T]) -> Result<T> {
    if curve.is_empty() {
        return Err(Error::EmptyMatrix("drawdown of an empty curve".into()));
    }
    if curve.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
        return Err(Error::InvalidArgument(
            "curve values must be positive".into(),
        ));
    }
    let mut peak = curve[0];
    let mut worst = T::zero();
    for &v in curve {
        if v > peak {
            peak = v;
        }
        let dd = (v - peak) / peak;
        if dd < worst {
            worst = dd;
        }
    }
    Ok(worst)
}

/// Volatility, Sharpe and drawdown of one equity curve, measured on its
/// per-rebalance returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub volatility: f64,
    /// `None` when the return series is constant (undefined ratio).
    pub sharpe: Option<f64>,
    pub max_drawdown: f64,
}

impl CurveStats {
    /// Stats of `curve` with returns taken between `anchors`.
    pub fn compute(curve: &[f64], anchors: &[usize]) -> Result<Self> {
        let returns = returns_between(curve, anchors)?;
        Ok(Self {
            volatility: volatility(&returns)?,
            sharpe: sharpe(&returns).ok(),
            max_drawdown: max_drawdown(curve)?,
        })
    }
}

/// The full metrics report for one backtest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percentage error of the tracker against the index, per trading day.
    pub percentage_error: Vec<f64>,
    pub mean_pe: f64,
    pub max_abs_pe: f64,
    pub tracker: CurveStats,
    pub index: CurveStats,
}

impl MetricsReport {
    pub fn compute(
        tracker_curve: &[f64],
        index_curve: &[f64],
        rebalance_anchors: &[usize],
    ) -> Result<Self> {
        let pe = percentage_error(tracker_curve, index_curve)?;
        let mean_pe = pe.iter().sum::<f64>() / pe.len() as f64;
        let max_abs_pe = pe.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            percentage_error: pe,
            mean_pe,
            max_abs_pe,
            tracker: CurveStats::compute(tracker_curve, rebalance_anchors)?,
            index: CurveStats::compute(index_curve, rebalance_anchors)?,
        })
    }
}
