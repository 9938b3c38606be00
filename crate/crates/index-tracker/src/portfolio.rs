//! Fitted sparse portfolios and their JSON representation.

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};
use ndarray::Array1;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::path::Path;

/// A sparse tracking portfolio produced by the selector or a baseline.
///
/// `tickers` and `weights` are aligned and restricted to the selected
/// assets; weights are non-negative and sum to one. `k_effective` can fall
/// below `k_requested` when a method selects the same asset more than once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPortfolio<T> {
    pub tickers: Vec<String>,
    pub weights: Vec<T>,
    pub k_requested: usize,
    pub k_effective: usize,
    pub in_sample_mse: T,
    pub seed: u64,
    /// Name of the construction method, e.g. `"stochastic"` or
    /// `"forward_selection"`.
    pub method: String,
    /// Method-specific configuration, kept verbatim for reproducibility.
    pub config: serde_json::Value,
}

impl<T: Scalar> FittedPortfolio<T> {
    /// Check the structural invariants: aligned lengths, `k_effective`
    /// consistent with the holdings, and weights on the simplex.
    pub fn validate(&self) -> Result<()> {
        if self.tickers.len() != self.weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} tickers but {} weights",
                self.tickers.len(),
                self.weights.len()
            )));
        }
        if self.k_effective != self.tickers.len() {
            return Err(Error::InvalidArgument(format!(
                "k_effective {} does not match {} holdings",
                self.k_effective,
                self.tickers.len()
            )));
        }
        if self.k_effective == 0 || self.k_effective > self.k_requested {
            return Err(Error::InvalidArgument(format!(
                "k_effective {} outside [1, k_requested = {}]",
                self.k_effective, self.k_requested
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.tickers {
            if !seen.insert(t.as_str()) {
                return Err(Error::DuplicateTicker(t.clone()));
            }
        }
        let sum: T = self.weights.iter().copied().sum();
        let tol = real::<T>(1e-9);
        if self.weights.iter().any(|w| !w.is_finite() || *w < -tol) {
            return Err(Error::InvalidArgument(
                "negative or non-finite weight".into(),
            ));
        }
        if (sum - T::one()).abs() > real::<T>(1e-6) {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        if !(self.in_sample_mse.is_finite() && self.in_sample_mse >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "in-sample MSE {} must be a non-negative number",
                self.in_sample_mse
            )));
        }
        Ok(())
    }

    /// Weights as a dense vector over `universe`, zero outside the holdings.
    pub fn dense_weights(&self, universe: &[String]) -> Result<Array1<T>> {
        let mut w = Array1::zeros(universe.len());
        for (t, &v) in self.tickers.iter().zip(&self.weights) {
            let i = universe
                .iter()
                .position(|u| u == t)
                .ok_or_else(|| Error::InvalidArgument(format!("{t} not in universe")))?;
            w[i] = v;
        }
        Ok(w)
    }
}

/// Serialize a portfolio to pretty JSON at `path`.
pub fn save_portfolio<T, P>(portfolio: &FittedPortfolio<T>, path: P) -> Result<()>
where
    T: Scalar + Serialize,
    P: AsRef<Path>,
{
    let json = serde_json::to_string_pretty(portfolio)
        .map_err(|e| Error::InvalidArgument(format!("portfolio serialization: {e}")))?;
    crate::io_util::write_atomic(path.as_ref(), &json)
}

/// Load a portfolio from JSON and check its invariants.
pub fn load_portfolio<T, P>(path: P) -> Result<FittedPortfolio<T>>
where
    T: Scalar + DeserializeOwned,
    P: AsRef<Path>,
{
    let raw = std::fs::read_to_string(path.as_ref())?;
    let portfolio: FittedPortfolio<T> =
        serde_json::from_str(&raw).map_err(|e| Error::Malformed {
            path: path.as_ref().display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
    portfolio.validate()?;
    Ok(portfolio)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FittedPortfolio<f64> {
        FittedPortfolio {
            tickers: vec!["A".into(), "B".into()],
            weights: vec![0.375, 0.625],
            k_requested: 3,
            k_effective: 2,
            in_sample_mse: 1.25e-6,
            seed: 42,
            method: "stochastic".into(),
            config: serde_json::json!({"iterations": 2000}),
        }
    }

    #[test]
    fn valid_portfolio_passes() {
        sample().validate().unwrap();
    }

    #[test]
    fn misaligned_weights_fail() {
        let mut p = sample();
        p.weights.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn weights_off_simplex_fail() {
        let mut p = sample();
        p.weights = vec![0.7, 0.7];
        assert!(p.validate().is_err());
        p.weights = vec![1.5, -0.5];
        assert!(p.validate().is_err());
    }

    #[test]
    fn k_effective_above_requested_fails() {
        let mut p = sample();
        p.k_requested = 1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        // weights chosen to exercise shortest-representation parsing
        let mut p = sample();
        p.weights = vec![1.0 / 3.0, 1.0 - 1.0 / 3.0];
        p.in_sample_mse = 0.1 + 0.2;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("portfolio.json");
        save_portfolio(&p, &path).unwrap();
        let q: FittedPortfolio<f64> = load_portfolio(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.weights[0].to_bits(), q.weights[0].to_bits());
    }

    #[test]
    fn dense_weights_scatter_into_universe() {
        let p = sample();
        let universe: Vec<String> = ["Z", "A", "Q", "B"].iter().map(|s| s.to_string()).collect();
        let w = p.dense_weights(&universe).unwrap();
        assert_eq!(w.to_vec(), vec![0.0, 0.375, 0.0, 0.625]);
        assert!(p.dense_weights(&["A".to_string()]).is_err());
    }
}
