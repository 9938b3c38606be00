//! Simplex-constrained least squares.
//!
//! Minimises `‖Xw − y‖²` over the probability simplex (`w ≥ 0`, `Σw = 1`)
//! in quadratic form: `min ½ wᵀPw + qᵀw` with `P = 2XᵀX`, `q = −2Xᵀy`.
//! The solver is an accelerated projected-gradient iteration with monotone
//! restarts; the step size is `1/L` with `L` the largest eigenvalue of `P`
//! estimated by power iteration. Everything is deterministic.

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Number of power-iteration rounds used to estimate the step size.
const POWER_ITERATIONS: usize = 50;
/// Relative tolerance for early power-iteration exit.
const POWER_TOL: f64 = 1e-6;

/// The quadratic program of the tracking regression, with the design matrix
/// kept alongside for exact residual evaluation.
#[derive(Debug, Clone)]
pub struct SimplexLsProblem<T> {
    p: Array2<T>,
    q: Array1<T>,
    x: Array2<T>,
    y: Array1<T>,
}

/// KKT residuals of a candidate point for the simplex-constrained program.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals<T> {
    /// Infinity norm of `w − Π(w − ∇f(w))`, the projected-gradient map.
    pub stationarity: T,
    /// `max(|Σw − 1|, max(0, −min w))`.
    pub primal: T,
    /// `max_i |(g_i − min_j g_j) · w_i|` with `g = ∇f(w)`.
    pub complementarity: T,
}

impl<T: Scalar> KktResiduals<T> {
    /// True when every residual is at or below `tol`.
    pub fn within(&self, tol: T) -> bool {
        self.stationarity <= tol && self.primal <= tol && self.complementarity <= tol
    }
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct SimplexSolution<T> {
    /// Final weights on the simplex.
    pub w: Array1<T>,
    /// Final `‖Xw − y‖²`, evaluated through the residual.
    pub objective: T,
    /// KKT residuals at `w`.
    pub kkt: KktResiduals<T>,
    /// Number of projected-gradient steps taken.
    pub iterations: usize,
    /// Whether the KKT residuals reached the requested tolerance.
    pub converged: bool,
}

/// Solver options. Defaults: `tol = 1e-8`, `max_iter = 50_000`.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            tol: real(1e-8),
            max_iter: 50_000,
        }
    }
}

impl<T: Scalar> SimplexLsProblem<T> {
    /// Number of assets.
    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// Number of observations.
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> ArrayView2<'_, T> {
        self.p.view()
    }

    pub fn q(&self) -> ArrayView1<'_, T> {
        self.q.view()
    }

    pub fn x(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, T> {
        self.y.view()
    }

    /// `‖Xw − y‖²` through the stored design matrix.
    pub fn residual_objective(&self, w: ArrayView1<'_, T>) -> T {
        let r = self.x.dot(&w) - &self.y;
        r.iter().map(|v| *v * *v).sum()
    }

    /// Gradient `∇‖Xw − y‖² = Pw + q`.
    fn gradient(&self, w: ArrayView1<'_, T>) -> Array1<T> {
        self.p.dot(&w) + &self.q
    }
}

/// Assemble `P = 2XᵀX`, `q = −2Xᵀy` for the given design matrix and target.
pub fn build_problem<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
) -> Result<SimplexLsProblem<T>> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::EmptyMatrix(format!(
            "design matrix is {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "X has {} rows but y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression inputs".into()));
    }
    let two = real::<T>(2.0);
    let mut p = x.t().dot(&x) * two;
    // force exact symmetry; the product is symmetric only up to rounding
    for i in 0..p.nrows() {
        for j in (i + 1)..p.ncols() {
            let avg = (p[[i, j]] + p[[j, i]]) / two;
            p[[i, j]] = avg;
            p[[j, i]] = avg;
        }
    }
    let q = x.t().dot(&y) * (-two);
    Ok(SimplexLsProblem {
        p,
        q,
        x: x.to_owned(),
        y: y.to_owned(),
    })
}

/// Euclidean projection onto the probability simplex.
///
/// Sort-based exact algorithm, `O(N log N)`.
pub fn project_simplex<T: Scalar>(v: ArrayView1<'_, T>) -> Array1<T> {
    let n = v.len();
    debug_assert!(n > 0);
    let mut sorted: Vec<T> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    let one = T::one();
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - one) / real::<T>((j + 1) as f64);
        if u - candidate > T::zero() {
            theta = candidate;
        } else {
            break;
        }
    }
    v.mapv(|x| (x - theta).max(T::zero()))
}

/// Largest eigenvalue of the symmetric PSD matrix `p`, by power iteration.
fn estimate_lmax<T: Scalar>(p: &Array2<T>) -> T {
    let n = p.nrows();
    // deterministic, not axis-aligned start
    let mut v = Array1::from_shape_fn(n, |i| real::<T>(1.0 + 0.25 * ((i % 13) as f64) / 13.0));
    let norm = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
    v /= norm;
    let mut lambda = T::zero();
    for _ in 0..POWER_ITERATIONS {
        let pv = p.dot(&v);
        let new_lambda = v.dot(&pv);
        let norm = pv.iter().map(|x| *x * *x).sum::<T>().sqrt();
        if norm <= T::zero() {
            return T::zero();
        }
        v = pv / norm;
        let diff = (new_lambda - lambda).abs();
        lambda = new_lambda;
        if diff <= real::<T>(POWER_TOL) * lambda.abs().max(T::one()) {
            break;
        }
    }
    lambda
}

/// KKT residual report for an arbitrary candidate `w`.
pub fn kkt_check<T: Scalar>(
    problem: &SimplexLsProblem<T>,
    w: ArrayView1<'_, T>,
) -> KktResiduals<T> {
    let g = problem.gradient(w);
    kkt_from_gradient(w, g.view())
}

fn kkt_from_gradient<T: Scalar>(w: ArrayView1<'_, T>, g: ArrayView1<'_, T>) -> KktResiduals<T> {
    let shifted = &w.to_owned() - &g.to_owned();
    let projected = project_simplex(shifted.view());
    let stationarity = w
        .iter()
        .zip(projected.iter())
        .map(|(a, b)| (*a - *b).abs())
        .fold(T::zero(), T::max);

    let sum: T = w.iter().copied().sum();
    let min_w = w.iter().copied().fold(T::infinity(), T::min);
    let primal = (sum - T::one()).abs().max((-min_w).max(T::zero()));

    let min_g = g.iter().copied().fold(T::infinity(), T::min);
    let complementarity = w
        .iter()
        .zip(g.iter())
        .map(|(wi, gi)| ((*gi - min_g) * *wi).abs())
        .fold(T::zero(), T::max);

    KktResiduals {
        stationarity,
        primal,
        complementarity,
    }
}

/// Solve the simplex-constrained program by accelerated projected gradient.
///
/// Returns the best iterate with `converged = false` when `max_iter` is
/// exhausted before the KKT residuals reach `tol`. Deterministic: no
/// randomness anywhere in the iteration.
pub fn solve<T: Scalar>(
    problem: &SimplexLsProblem<T>,
    opts: SolveOptions<T>,
) -> Result<SimplexSolution<T>> {
    let n = problem.n();
    if problem.q.iter().any(|v| !v.is_finite()) || problem.p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quadratic program inputs".into()));
    }
    let uniform = real::<T>(1.0 / n as f64);
    let mut w = Array1::from_elem(n, uniform);

    if n == 1 {
        let mut w = w;
        w[0] = T::one();
        let objective = problem.residual_objective(w.view());
        let kkt = kkt_check(problem, w.view());
        return Ok(SimplexSolution {
            w,
            objective,
            kkt,
            iterations: 0,
            converged: true,
        });
    }

    let lmax = estimate_lmax(&problem.p);
    let step = if lmax > T::zero() {
        T::one() / lmax
    } else {
        T::one()
    };

    // quadratic value up to the constant ‖y‖²; cheap via g = Pw + q
    let half = real::<T>(0.5);
    let quad = |w: &Array1<T>, g: &Array1<T>| -> T { half * (w.dot(g) + w.dot(&problem.q)) };

    let mut g_w = problem.gradient(w.view());
    let mut f_w = quad(&w, &g_w);

    let mut w_prev = w.clone();
    let mut t_momentum = T::one();
    let mut iterations = 0;
    let mut converged = kkt_from_gradient(w.view(), g_w.view()).within(opts.tol);

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let t_next =
            (T::one() + (T::one() + real::<T>(4.0) * t_momentum * t_momentum).sqrt()) * half;
        let beta = (t_momentum - T::one()) / t_next;
        let extrapolated = &w + &((&w - &w_prev) * beta);
        let g_ex = problem.gradient(extrapolated.view());
        let mut candidate = project_simplex((&extrapolated - &(&g_ex * step)).view());
        let mut g_c = problem.gradient(candidate.view());
        let mut f_c = quad(&candidate, &g_c);

        if f_c > f_w {
            // accelerated step overshot: restart momentum, take the plain step
            candidate = project_simplex((&w - &(&g_w * step)).view());
            g_c = problem.gradient(candidate.view());
            f_c = quad(&candidate, &g_c);
            t_momentum = T::one();
            if f_c > f_w {
                // no descent direction left at this step size: stalled
                break;
            }
        } else {
            t_momentum = t_next;
        }

        w_prev = w;
        w = candidate;
        g_w = g_c;
        f_w = f_c;
        converged = kkt_from_gradient(w.view(), g_w.view()).within(opts.tol);
    }

    let objective = problem.residual_objective(w.view());
    let kkt = kkt_from_gradient(w.view(), g_w.view());
    Ok(SimplexSolution {
        w,
        objective,
        kkt,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn solve_default<T: Scalar>(p: &SimplexLsProblem<T>) -> SimplexSolution<T> {
        solve(p, SolveOptions::default()).unwrap()
    }

    /// naive triple-loop multiply oracle for P = 2 XᵀX
    fn p_oracle(x: &Array2<f64>) -> Array2<f64> {
        let (d, n) = x.dim();
        let mut p = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for t in 0..d {
                    acc += x[[t, i]] * x[[t, j]];
                }
                p[[i, j]] = 2.0 * acc;
            }
        }
        p
    }

    #[test]
    fn build_identity_design() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let y = array![1.0, 0.0];
        let prob = build_problem(x.view(), y.view()).unwrap();
        assert_eq!(prob.p(), array![[2.0, 0.0], [0.0, 2.0]]);
        assert_eq!(prob.q(), array![-2.0, 0.0]);
    }

    #[test]
    fn build_column_equal_to_target() {
        let y = array![0.5, -0.25, 1.0];
        let x = Array2::from_shape_fn((3, 2), |(t, i)| if i == 0 { y[t] } else { 0.1 });
        let prob = build_problem(x.view(), y.view()).unwrap();
        let norm2: f64 = y.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(prob.q()[0], -2.0 * norm2, epsilon = 1e-14);
    }

    #[test]
    fn build_matches_triple_loop_oracle() {
        let mut rng = crate::rng::seeded_rng(11);
        let x = Array2::from_shape_fn((5, 3), |_| rng.random::<f64>() - 0.5);
        let y = Array1::from_shape_fn(5, |_| rng.random::<f64>());
        let prob = build_problem(x.view(), y.view()).unwrap();
        let oracle = p_oracle(&x);
        for (a, b) in prob.p().iter().zip(oracle.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn build_rejects_empty() {
        let x = Array2::<f64>::zeros((0, 0));
        let y = Array1::<f64>::zeros(0);
        assert!(matches!(
            build_problem(x.view(), y.view()),
            Err(Error::EmptyMatrix(_))
        ));
    }

    #[test]
    fn build_rejects_nan() {
        let x = array![[f64::NAN]];
        let y = array![0.0];
        assert!(matches!(
            build_problem(x.view(), y.view()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn projection_basics() {
        let p = project_simplex(array![0.6f64, 0.4].view());
        assert_abs_diff_eq!(p[0], 0.6, epsilon = 1e-15);
        let p = project_simplex(array![5.0f64, 1.0].view());
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-15);
        let p = project_simplex(array![-3.0f64, -3.0, -3.0].view());
        for v in p.iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn solve_vertex_target() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let y = array![1.0, 0.0];
        let sol = solve_default(&build_problem(x.view(), y.view()).unwrap());
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.w[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.w[1], 0.0, epsilon = 1e-7);
        assert!(sol.objective < 1e-12);
    }

    #[test]
    fn solve_interior_target() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let y = array![0.6, 0.4];
        let sol = solve_default(&build_problem(x.view(), y.view()).unwrap());
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.w[0], 0.6, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.w[1], 0.4, epsilon = 1e-8);
    }

    #[test]
    fn solve_recovers_planted_weights() {
        let mut rng = crate::rng::seeded_rng(3);
        let x = Array2::from_shape_fn((100, 8), |_| rng.random::<f64>() - 0.5);
        let mut w_star = Array1::from_shape_fn(8, |_| rng.random::<f64>());
        let total: f64 = w_star.iter().sum();
        w_star.mapv_inplace(|v| v / total);
        let y = x.dot(&w_star);
        let sol = solve_default(&build_problem(x.view(), y.view()).unwrap());
        assert!(sol.converged);
        let err = sol
            .w
            .iter()
            .zip(w_star.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "recovery error {err}");
    }

    #[test]
    fn kkt_residuals_at_optimum_and_elsewhere() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let y = array![1.0, 0.0];
        let prob = build_problem(x.view(), y.view()).unwrap();
        let sol = solve_default(&prob);
        let kkt = kkt_check(&prob, sol.w.view());
        assert!(kkt.within(1e-8));

        // uniform point on a vertex-optimal problem is non-stationary
        let uniform = array![0.5, 0.5];
        let kkt = kkt_check(&prob, uniform.view());
        assert!(kkt.stationarity > 1e-3);

        // sum-to-one violation is reported exactly
        let infeasible = array![0.7, 0.4];
        let kkt = kkt_check(&prob, infeasible.view());
        assert_abs_diff_eq!(kkt.primal, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn objective_monotone_under_iteration() {
        // re-run the iteration manually at increasing max_iter and require a
        // non-increasing objective sequence
        let mut rng = crate::rng::seeded_rng(17);
        for _ in 0..3 {
            let x = Array2::from_shape_fn((40, 12), |_| rng.random::<f64>() - 0.5);
            let y = Array1::from_shape_fn(40, |_| rng.random::<f64>() - 0.5);
            let prob = build_problem(x.view(), y.view()).unwrap();
            let mut last = f64::INFINITY;
            for iters in [1usize, 2, 4, 8, 16, 32, 64, 128] {
                let sol = solve(
                    &prob,
                    SolveOptions {
                        tol: 0.0,
                        max_iter: iters,
                    },
                )
                .unwrap();
                assert!(
                    sol.objective <= last * (1.0 + 1e-12) + 1e-12,
                    "objective increased: {last} -> {}",
                    sol.objective
                );
                last = sol.objective;
            }
        }
    }

    #[test]
    fn column_permutation_permutes_solution() {
        let mut rng = crate::rng::seeded_rng(5);
        let x = Array2::from_shape_fn((30, 6), |_| rng.random::<f64>() - 0.5);
        let y = Array1::from_shape_fn(30, |_| rng.random::<f64>() - 0.5);
        let sol = solve_default(&build_problem(x.view(), y.view()).unwrap());

        let perm = [3usize, 0, 4, 1, 5, 2];
        let xp = Array2::from_shape_fn((30, 6), |(t, i)| x[[t, perm[i]]]);
        let solp = solve_default(&build_problem(xp.view(), y.view()).unwrap());
        for (i, &src) in perm.iter().enumerate() {
            assert_abs_diff_eq!(solp.w[i], sol.w[src], epsilon = 1e-6);
        }
    }

    #[test]
    fn matches_grid_search_for_tiny_problems() {
        let mut rng = crate::rng::seeded_rng(23);
        let x = Array2::from_shape_fn((15, 3), |_| rng.random::<f64>() - 0.5);
        let y = Array1::from_shape_fn(15, |_| rng.random::<f64>() - 0.5);
        let prob = build_problem(x.view(), y.view()).unwrap();
        let sol = solve_default(&prob);

        // exhaustive simplex grid, step 1e-3
        let steps = 1000usize;
        let mut best = f64::INFINITY;
        for a in 0..=steps {
            for b in 0..=(steps - a) {
                let w = array![
                    a as f64 / steps as f64,
                    b as f64 / steps as f64,
                    (steps - a - b) as f64 / steps as f64
                ];
                let obj = prob.residual_objective(w.view());
                if obj < best {
                    best = obj;
                }
            }
        }
        // grid resolution bound: f is smooth, step 1e-3
        assert!(sol.objective <= best + 1e-4);
        assert!(best <= sol.objective + 1e-4);
    }

    #[test]
    fn deterministic_bitwise() {
        let mut rng = crate::rng::seeded_rng(29);
        let x = Array2::from_shape_fn((25, 7), |_| rng.random::<f64>() - 0.5);
        let y = Array1::from_shape_fn(25, |_| rng.random::<f64>() - 0.5);
        let prob = build_problem(x.view(), y.view()).unwrap();
        let a = solve_default(&prob);
        let b = solve_default(&prob);
        assert_eq!(a.iterations, b.iterations);
        for (x, y) in a.w.iter().zip(b.w.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn works_in_f32_too() {
        let x = array![[1.0f32, 0.0], [0.0, 1.0]];
        let y = array![0.25f32, 0.75];
        let sol = solve(
            &build_problem(x.view(), y.view()).unwrap(),
            SolveOptions {
                tol: 1e-5,
                max_iter: 10_000,
            },
        )
        .unwrap();
        assert!((sol.w[0] - 0.25).abs() < 1e-4);
    }
}
