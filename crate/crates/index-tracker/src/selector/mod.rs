//! Stochastic selection of sparse tracking portfolios.
//!
//! The cardinality constraint is reparametrised as `k` categorical draws
//! ("bags") over the `n` assets. Each bag `i` holds a score row `S_i`; a
//! draw adds Gumbel noise to the log-probabilities and takes the argmax,
//! which distributes exactly like sampling from `softmax(S_i)`. The `k`
//! one-hot draws sum into a mask, the masked exponentiated raw weights are
//! normalised onto the simplex, and the tracking error of that portfolio is
//! the training loss.
//!
//! The argmax is not differentiable, so gradients flow through a
//! straight-through estimator: the forward pass uses the hard mask, the
//! backward pass differentiates the Gumbel-softmax relaxation in its place.
//! Everything else in the chain (masking, exponentiation, normalisation,
//! the quadratic loss) is differentiated exactly; see [`backward`].
//!
//! Two annealing placements are supported. By default the temperature
//! divides the score logits, so the sampling distribution itself sharpens
//! over time while the relaxation stays at unit temperature. With
//! [`TrainConfig::anneal_logits`] the scores are used as-is and the
//! temperature instead divides inside the relaxation softmax.

mod adam;
mod sweep;

pub use adam::{Adam, AdamConfig};
pub use sweep::{sweep_seeds, SweepResult, SweepRun};

use crate::error::{Error, Result};
use crate::market_data::ReturnsMatrix;
use crate::portfolio::FittedPortfolio;
use crate::qp::{self, SolveOptions};
use crate::rng::seeded_rng;
use crate::scalar::{real, Scalar};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Ix1, Ix2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Temperature as a function of the training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TempSchedule {
    /// `tau(t) = scale / ln(e + t)`; equals `scale` exactly at `t = 0`.
    LogDecay { scale: f64 },
    /// Fixed temperature, mainly for tests and diagnostics.
    Constant { value: f64 },
}

impl Default for TempSchedule {
    fn default() -> Self {
        TempSchedule::LogDecay { scale: 0.1 }
    }
}

/// Evaluate a [`TempSchedule`] at a step.
pub fn temperature<T: Scalar>(schedule: TempSchedule, step: usize) -> T {
    match schedule {
        TempSchedule::LogDecay { scale } => {
            real::<T>(scale / (std::f64::consts::E + step as f64).ln())
        }
        TempSchedule::Constant { value } => real::<T>(value),
    }
}

/// Row-wise stable `softmax(logits / tau)`.
pub fn softmax_with_temperature<T: Scalar>(logits: ArrayView1<T>, tau: T) -> Array1<T> {
    let mut out = log_softmax_with_temperature(logits, tau);
    out.mapv_inplace(T::exp);
    out
}

/// Row-wise stable `ln softmax(logits / tau)`.
pub fn log_softmax_with_temperature<T: Scalar>(logits: ArrayView1<T>, tau: T) -> Array1<T> {
    debug_assert!(tau > T::zero());
    let scaled = logits.mapv(|v| v / tau);
    let max = scaled.iter().copied().fold(T::neg_infinity(), T::max);
    let shifted = scaled.mapv(|v| v - max);
    let log_norm = shifted.iter().map(|v| v.exp()).sum::<T>().ln();
    shifted.mapv(|v| v - log_norm)
}

/// Standard Gumbel variate from a uniform draw, clamped away from 0 and 1.
pub fn gumbel_from_uniform<T: Scalar>(u: f64) -> T {
    let u = u.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
    real::<T>(-(-u.ln()).ln())
}

/// A `rows x cols` matrix of standard Gumbel noise.
///
/// Uniform draws are consumed row-major, one per cell, regardless of the
/// scalar type, so `f32` and `f64` runs see the same underlying stream.
pub fn sample_gumbel<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| gumbel_from_uniform(rng.random::<f64>()))
}

/// Index of the Gumbel-max draw `argmax_j (log_probs_j + gumbel_j)`.
///
/// Distributes like a categorical sample from `exp(log_probs)`; ties keep
/// the lowest index.
pub fn hard_sample<T: Scalar>(log_probs: ArrayView1<T>, gumbel: ArrayView1<T>) -> usize {
    debug_assert_eq!(log_probs.len(), gumbel.len());
    let mut best = 0;
    let mut best_val = T::neg_infinity();
    for (j, (&lp, &g)) in log_probs.iter().zip(gumbel.iter()).enumerate() {
        let v = lp + g;
        if v > best_val {
            best_val = v;
            best = j;
        }
    }
    best
}

/// Gumbel-softmax relaxation `softmax((log_probs + gumbel) / tau)` of the
/// hard draw; its argmax coincides with [`hard_sample`].
pub fn soft_sample<T: Scalar>(
    log_probs: ArrayView1<T>,
    gumbel: ArrayView1<T>,
    tau: T,
) -> Array1<T> {
    let perturbed = &log_probs.to_owned() + &gumbel;
    softmax_with_temperature(perturbed.view(), tau)
}

/// The masked softmax allocation of raw weights.
#[derive(Debug, Clone)]
pub struct Allocation<T> {
    /// Portfolio weights, zero off the mask, summing to one.
    pub weights: Array1<T>,
    /// `exp(raw - max(raw))`; shift-invariant numerator of the weights.
    pub stabilized_exp: Array1<T>,
    /// Normaliser `sum(stabilized_exp * mask)`.
    pub normalizer: T,
}

/// Exponentiate raw weights, apply the selection mask, normalise.
///
/// The raw weights are shifted by their maximum before exponentiation; the
/// shift cancels in the normalisation, so the result is invariant (up to
/// rounding) to adding a constant to all raw weights, and exponentiation
/// cannot overflow however large the raw weights grow.
pub fn allocate<T: Scalar>(raw_weights: ArrayView1<T>, mask: ArrayView1<T>) -> Allocation<T> {
    debug_assert_eq!(raw_weights.len(), mask.len());
    let max = raw_weights.iter().copied().fold(T::neg_infinity(), T::max);
    let stabilized_exp = raw_weights.mapv(|v| (v - max).exp());
    let masked = &stabilized_exp * &mask;
    let normalizer = masked.sum();
    debug_assert!(normalizer > T::zero(), "mask must select something");
    Allocation {
        weights: masked / normalizer,
        stabilized_exp,
        normalizer,
    }
}

/// Mean squared tracking error `|Xw - y|^2 / D`.
pub fn loss<T: Scalar>(x: ArrayView2<T>, y: ArrayView1<T>, w: ArrayView1<T>) -> T {
    let resid = x.dot(&w) - y;
    resid.dot(&resid) / real::<T>(x.nrows() as f64)
}

/// Trainable parameters: one score row per bag, one raw weight per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorParams<T> {
    /// `k x n` score matrix; row `i` parametrises bag `i`'s categorical.
    pub scores: Array2<T>,
    /// `n` unconstrained weight parameters, exponentiated by [`allocate`].
    pub raw_weights: Array1<T>,
}

impl<T: Scalar> SelectorParams<T> {
    /// Zero initialisation: uniform sampling distributions, equal weights.
    pub fn init(k: usize, n: usize) -> Self {
        Self {
            scores: Array2::zeros((k, n)),
            raw_weights: Array1::zeros(n),
        }
    }

    pub fn k(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n(&self) -> usize {
        self.scores.ncols()
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Number of bags, i.e. the cardinality budget.
    pub k: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub schedule: TempSchedule,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Move the temperature from the score softmax into the relaxation
    /// softmax (the scores are then used unannealed).
    pub anneal_logits: bool,
    /// Clamp repeated picks to a 0/1 mask instead of counting them.
    pub binarize_mask: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 10,
            iterations: 2000,
            learning_rate: 0.05,
            schedule: TempSchedule::default(),
            adam: AdamConfig::default(),
            seed: 42,
            anneal_logits: false,
            binarize_mask: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::InvalidArgument(format!(
                "k = {} outside [1, n = {n}]",
                self.k
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        let tau0 = temperature::<f64>(self.schedule, 0);
        if !(tau0.is_finite() && tau0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature schedule starts at {tau0}, must be positive"
            )));
        }
        Ok(())
    }
}

/// Everything one stochastic forward pass produced.
#[derive(Debug, Clone)]
pub struct ForwardSample<T> {
    pub step: usize,
    pub tau: T,
    /// Per-bag sampling probabilities `pi`, `k x n`.
    pub probs: Array2<T>,
    /// Per-bag relaxed samples `sigma`, `k x n`.
    pub soft: Array2<T>,
    /// Per-bag hard picks (argmax indices).
    pub picks: Vec<usize>,
    /// Selection mask over assets; hard pick counts unless relaxed.
    pub mask: Array1<T>,
    /// Allocation of the raw weights under `mask`.
    pub allocation: Allocation<T>,
    pub loss: T,
    /// True when the mask is the soft sum of `sigma` rows (no argmax in
    /// the forward pass); used to validate gradients by finite differences.
    pub relaxed: bool,
}

impl<T: Scalar> ForwardSample<T> {
    /// Structural invariants of a hard sample.
    pub fn validate(&self, k: usize) -> Result<()> {
        let tol = real::<T>(1e-9);
        if self.picks.len() != k {
            return Err(Error::InvalidArgument(format!(
                "{} picks for {k} bags",
                self.picks.len()
            )));
        }
        for row in self
            .probs
            .axis_iter(Axis(0))
            .chain(self.soft.axis_iter(Axis(0)))
        {
            let sum = row.sum();
            if (sum - T::one()).abs() > real::<T>(1e-6) {
                return Err(Error::InvalidArgument(format!(
                    "distribution row sums to {sum}"
                )));
            }
            if row.iter().any(|p| *p < T::zero() || !p.is_finite()) {
                return Err(Error::InvalidArgument("negative probability".into()));
            }
        }
        if !self.relaxed {
            if self
                .mask
                .iter()
                .any(|m| m.fract() != T::zero() || *m < T::zero())
            {
                return Err(Error::InvalidArgument(
                    "mask entries must be whole counts".into(),
                ));
            }
            // counts sum to k exactly; a binarized mask can sum to less
            let total = self.mask.sum();
            if total > real::<T>(k as f64) + tol || total < T::one() {
                return Err(Error::InvalidArgument(format!(
                    "mask total {total} outside [1, {k}]"
                )));
            }
        }
        let wsum = self.allocation.weights.sum();
        if (wsum - T::one()).abs() > real::<T>(1e-6) {
            return Err(Error::InvalidArgument(format!("weights sum to {wsum}")));
        }
        for (j, &w) in self.allocation.weights.iter().enumerate() {
            if w < T::zero() || !w.is_finite() {
                return Err(Error::InvalidArgument(format!("weight {w} at {j}")));
            }
            if w > T::zero() && self.mask[j] == T::zero() {
                return Err(Error::InvalidArgument(format!(
                    "weight off the mask at {j}"
                )));
            }
        }
        if !(self.loss.is_finite() && self.loss >= T::zero()) {
            return Err(Error::InvalidArgument(format!("loss {}", self.loss)));
        }
        Ok(())
    }
}

fn forward_impl<T: Scalar>(
    params: &SelectorParams<T>,
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    step: usize,
    cfg: &TrainConfig,
    gumbel: &Array2<T>,
    relaxed: bool,
) -> ForwardSample<T> {
    let (k, n) = (params.k(), params.n());
    debug_assert_eq!(gumbel.dim(), (k, n));
    let tau = temperature::<T>(cfg.schedule, step);
    let one = T::one();
    // default: anneal the score softmax, relax at unit temperature;
    // anneal_logits: unannealed scores, temperature in the relaxation
    let (score_tau, relax_tau) = if cfg.anneal_logits {
        (one, tau)
    } else {
        (tau, one)
    };

    let mut probs = Array2::zeros((k, n));
    let mut soft = Array2::zeros((k, n));
    let mut picks = Vec::with_capacity(k);
    let mut mask = Array1::zeros(n);
    for i in 0..k {
        let log_probs = log_softmax_with_temperature(params.scores.row(i), score_tau);
        let g = gumbel.row(i);
        let sigma = soft_sample(log_probs.view(), g, relax_tau);
        picks.push(hard_sample(log_probs.view(), g));
        probs.row_mut(i).assign(&log_probs.mapv(T::exp));
        soft.row_mut(i).assign(&sigma);
    }
    if relaxed {
        for i in 0..k {
            mask += &soft.row(i);
        }
    } else {
        for &j in &picks {
            mask[j] += one;
        }
        if cfg.binarize_mask {
            mask.mapv_inplace(|m| if m > T::zero() { one } else { T::zero() });
        }
    }

    let allocation = allocate(params.raw_weights.view(), mask.view());
    let loss = loss(x, y, allocation.weights.view());
    ForwardSample {
        step,
        tau,
        probs,
        soft,
        picks,
        mask,
        allocation,
        loss,
        relaxed,
    }
}

/// One stochastic forward pass with the hard (argmax) mask.
pub fn forward<T: Scalar>(
    params: &SelectorParams<T>,
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    step: usize,
    cfg: &TrainConfig,
    gumbel: &Array2<T>,
) -> ForwardSample<T> {
    forward_impl(params, x, y, step, cfg, gumbel, false)
}

/// Fully relaxed forward pass: the mask is the sum of the soft rows, so the
/// whole map is differentiable and [`backward`] is its exact gradient.
pub fn forward_relaxed<T: Scalar>(
    params: &SelectorParams<T>,
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    step: usize,
    cfg: &TrainConfig,
    gumbel: &Array2<T>,
) -> ForwardSample<T> {
    forward_impl(params, x, y, step, cfg, gumbel, true)
}

/// Gradients of the loss with respect to [`SelectorParams`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub scores: Array2<T>,
    pub raw_weights: Array1<T>,
}

/// Straight-through gradient of a forward sample's loss.
///
/// Let `gw = (2/D) X^T (Xw - y)` and `r = gw - (gw . w)`. The exact
/// gradient through the allocation is `d_raw = w * r`. For the scores the
/// hard mask's pick counts are replaced by the relaxed rows `sigma` (the
/// straight-through step), giving per asset `c = (v / normalizer) * r`
/// with `v` the stabilised exponentials, then per bag the softmax
/// Jacobians `a_i = sigma_i * (c - sigma_i . c)` and
/// `dS_i = (a_i - pi_i * sum(a_i)) / tau`. On a [`forward_relaxed`] sample
/// the same formulas are the exact gradient, which is how they are tested.
pub fn backward<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    sample: &ForwardSample<T>,
) -> Gradients<T> {
    let w = &sample.allocation.weights;
    let d = real::<T>(x.nrows() as f64);
    let resid = x.dot(w) - y;
    let gw = x.t().dot(&resid) * (real::<T>(2.0) / d);
    let gdotw = gw.dot(w);
    let r = gw.mapv(|g| g - gdotw);

    let raw_weights = w * &r;

    let c = &sample.allocation.stabilized_exp / sample.allocation.normalizer * &r;
    let k = sample.probs.nrows();
    let mut scores = Array2::zeros(sample.probs.raw_dim());
    for i in 0..k {
        let sigma = sample.soft.row(i);
        let pi = sample.probs.row(i);
        let sc = sigma.dot(&c);
        let a = &sigma.to_owned() * &c.mapv(|cj| cj - sc);
        let asum = a.sum();
        let ds = a
            .iter()
            .zip(pi.iter())
            .map(|(&aj, &pj)| (aj - pj * asum) / sample.tau)
            .collect::<Array1<T>>();
        scores.row_mut(i).assign(&ds);
    }
    Gradients {
        scores,
        raw_weights,
    }
}

/// Source of Gumbel noise matrices for the training loop.
///
/// Injectable so tests can pin the noise; production training uses
/// [`GumbelNoise`] over a seeded generator.
pub trait NoiseSource<T> {
    fn gumbel_matrix(&mut self, rows: usize, cols: usize) -> Array2<T>;
}

/// [`NoiseSource`] drawing fresh Gumbel noise from an RNG.
pub struct GumbelNoise<R>(pub R);

impl<T: Scalar, R: Rng> NoiseSource<T> for GumbelNoise<R> {
    fn gumbel_matrix(&mut self, rows: usize, cols: usize) -> Array2<T> {
        sample_gumbel(&mut self.0, rows, cols)
    }
}

impl<T, F> NoiseSource<T> for F
where
    F: FnMut(usize, usize) -> Array2<T>,
{
    fn gumbel_matrix(&mut self, rows: usize, cols: usize) -> Array2<T> {
        self(rows, cols)
    }
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: SelectorParams<T>,
    /// Forward pass at the final parameters (step = `iterations`).
    pub final_sample: ForwardSample<T>,
    /// Per-iteration training losses.
    pub losses: Vec<T>,
}

/// Train with noise from a generator seeded by `cfg.seed`.
pub fn train<T: Scalar>(
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let mut noise = GumbelNoise(seeded_rng(cfg.seed));
    train_with_noise(x, y, cfg, &mut noise)
}

/// Train with an explicit noise source.
pub fn train_with_noise<T: Scalar, NS: NoiseSource<T>>(
    x: ArrayView2<T>,
    y: ArrayView1<T>,
    cfg: &TrainConfig,
    noise: &mut NS,
) -> Result<TrainOutcome<T>> {
    let n = x.ncols();
    cfg.validate(n)?;
    if x.nrows() == 0 || n == 0 {
        return Err(Error::EmptyMatrix("training returns".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "X has {} rows, y has {}",
            x.nrows(),
            y.len()
        )));
    }
    let k = cfg.k;
    let lr = real::<T>(cfg.learning_rate);
    let mut params = SelectorParams::<T>::init(k, n);
    let mut adam_scores: Adam<T, Ix2> = Adam::new(params.scores.raw_dim(), &cfg.adam);
    let mut adam_raw: Adam<T, Ix1> = Adam::new(params.raw_weights.raw_dim(), &cfg.adam);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for step in 0..cfg.iterations {
        let gumbel = noise.gumbel_matrix(k, n);
        let sample = forward(&params, x, y, step, cfg, &gumbel);
        if !sample.loss.is_finite() {
            return Err(Error::Diverged {
                iteration: step,
                msg: format!("loss became {}", sample.loss),
            });
        }
        losses.push(sample.loss);
        let grads = backward(x, y, &sample);
        adam_scores.step(&mut params.scores, grads.scores.view(), lr);
        adam_raw.step(&mut params.raw_weights, grads.raw_weights.view(), lr);
    }
    let gumbel = noise.gumbel_matrix(k, n);
    let final_sample = forward(&params, x, y, cfg.iterations, cfg, &gumbel);
    Ok(TrainOutcome {
        params,
        final_sample,
        losses,
    })
}

/// Selected asset indices of a mask, ascending.
pub fn extract_assets<T: Scalar>(mask: ArrayView1<T>) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m > T::zero())
        .map(|(j, _)| j)
        .collect()
}

/// How to turn a training run into a fitted portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub train: TrainConfig,
    /// Re-solve the weights on the selected support by constrained least
    /// squares; otherwise keep the trained allocation.
    pub refine: bool,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            refine: true,
            qp_tol: 1e-8,
            qp_max_iter: 50_000,
        }
    }
}

/// Train the selector on a returns matrix and package the result.
pub fn fit_portfolio<T: Scalar + Serialize>(
    returns: &ReturnsMatrix<T>,
    opts: &FitOptions,
) -> Result<FittedPortfolio<T>> {
    let outcome = train(returns.x(), returns.y(), &opts.train)?;
    portfolio_from_outcome(returns, opts, &outcome)
}

/// Package an existing training outcome (used by the seed sweep, which
/// keeps the loss traces as well).
pub fn portfolio_from_outcome<T: Scalar + Serialize>(
    returns: &ReturnsMatrix<T>,
    opts: &FitOptions,
    outcome: &TrainOutcome<T>,
) -> Result<FittedPortfolio<T>> {
    let sample = &outcome.final_sample;
    sample.validate(opts.train.k)?;
    let ids = extract_assets(sample.mask.view());
    let sub = returns.column_subset(&ids)?;
    let weights: Array1<T> = if opts.refine {
        let problem = qp::build_problem(sub.x(), sub.y())?;
        let solution = qp::solve(
            &problem,
            SolveOptions {
                tol: real::<T>(opts.qp_tol),
                max_iter: opts.qp_max_iter,
            },
        )?;
        solution.w
    } else {
        ids.iter().map(|&j| sample.allocation.weights[j]).collect()
    };
    let in_sample_mse = loss(sub.x(), sub.y(), weights.view());
    let portfolio = FittedPortfolio {
        tickers: sub.tickers().to_vec(),
        weights: weights.to_vec(),
        k_requested: opts.train.k,
        k_effective: ids.len(),
        in_sample_mse,
        seed: opts.train.seed,
        method: "stochastic".into(),
        config: serde_json::to_value(opts)
            .map_err(|e| Error::InvalidArgument(format!("config serialization: {e}")))?,
    };
    portfolio.validate()?;
    Ok(portfolio)
}
