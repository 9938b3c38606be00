//! Adam optimizer over ndarray parameter tensors.

use crate::scalar::{real, Scalar};
use ndarray::{Array, ArrayView, Dimension};
use serde::{Deserialize, Serialize};

/// Moment-decay hyperparameters. The learning rate is passed per step so a
/// single config can drive several parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam state for one parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam<T, D: Dimension> {
    m: Array<T, D>,
    v: Array<T, D>,
    step: usize,
    beta1: T,
    beta2: T,
    epsilon: T,
}

impl<T: Scalar, D: Dimension> Adam<T, D> {
    pub fn new(shape: D, config: &AdamConfig) -> Self {
        Self {
            m: Array::zeros(shape.clone()),
            v: Array::zeros(shape),
            step: 0,
            beta1: real(config.beta1),
            beta2: real(config.beta2),
            epsilon: real(config.epsilon),
        }
    }

    /// One update: `params -= lr * m_hat / (sqrt(v_hat) + eps)` with
    /// bias-corrected moment estimates.
    pub fn step(&mut self, params: &mut Array<T, D>, grad: ArrayView<'_, T, D>, lr: T) {
        debug_assert_eq!(params.raw_dim(), grad.raw_dim());
        self.step += 1;
        let one = T::one();
        let b1 = self.beta1;
        let b2 = self.beta2;
        // 1 - beta^t without catastrophic cancellation for small t
        let corr1 = one - b1.powi(self.step as i32);
        let corr2 = one - b2.powi(self.step as i32);
        ndarray::Zip::from(params)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            });
    }
}
