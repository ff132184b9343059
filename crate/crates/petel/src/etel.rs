//! Inner dual solver for the exponentially tilted empirical likelihood.
//!
//! For a moment matrix `G` with rows `g_i = g(X_i, theta)`, the tilted
//! weights solve
//!
//! ```text
//! max sum_i -w_i log(n w_i)   s.t.  sum w_i = 1,  sum w_i g_i = 0
//! ```
//!
//! whose dual is the unconstrained convex problem
//! `min_lambda f(lambda) = n^{-1} sum_i exp(lambda . g_i)`, giving
//! `p_i = exp(lambda . g_i) / sum_j exp(lambda . g_j)` and
//! `log ETEL = sum_i log p_i`.
//!
//! The solver is a damped Newton iteration: direction `-H^{-1} G` with
//! `H = n^{-1} sum e_i g_i g_i'`, `G = n^{-1} sum e_i g_i` and step
//! halving until `f` does not increase, stopping once the decrement norm
//! `||H^{-1}G||` drops below the tolerance. All exponentials are shifted
//! by `max_i lambda . g_i`; the Newton direction is invariant to that
//! scaling, so nothing overflows even for `lambda . g` of several
//! hundred.
//!
//! The dual has a minimizer only when zero lies in the interior of the
//! convex hull of the rows. For any feasible instance `f* >= 1/n`
//! (the optimum equals `exp(-KL)` against uniform weights, and that KL
//! is at most `log n`), so observing `f < 1/n` certifies infeasibility;
//! the solver reports it as [`EtelError::DualUnbounded`] together with
//! the norm-cap and failed-halving escapes.

use crate::data::Dataset;
use crate::loss::{moment_matrix, LossError, LossModel};
use crate::math::{cholesky, cholesky_solve, logsumexp, KahanSum};
use ndarray::{Array1, Array2};
use thiserror::Error;

/// Hard cap on the multiplier norm before declaring the dual unbounded.
pub const LAMBDA_NORM_CAP: f64 = 1e4;
/// Step-halving budget per Newton iteration.
pub const MAX_HALVINGS: usize = 60;
/// Default decrement tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default Newton iteration budget.
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Error)]
pub enum EtelError {
    #[error("dual is unbounded: zero is outside the convex hull of the moment rows ({reason})")]
    DualUnbounded { reason: &'static str },
    #[error("tilting Hessian is numerically singular")]
    SingularHessian,
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Solution of the inner tilting problem at one parameter value.
#[derive(Debug, Clone)]
pub struct EtelSolution {
    /// Lagrange multiplier `lambda(theta)`.
    pub lambda: Array1<f64>,
    /// Tilted probabilities `p_i(theta)`; strictly positive, sum to one.
    pub weights: Array1<f64>,
    /// `sum_i log p_i(theta)`; at most `-n log n`.
    pub log_etel: f64,
    /// Newton iterations taken.
    pub iterations: usize,
    /// Final decrement norm `||H^{-1} G||_2`.
    pub grad_norm: f64,
    /// Whether the decrement dropped below tolerance within budget.
    pub converged: bool,
    /// Objective `log f` after each accepted step (index 0 = start).
    pub log_f_history: Vec<f64>,
}

/// `log f(lambda)` evaluated through log-sum-exp of `t_i = lambda . g_i`.
fn log_f(t: &Array1<f64>) -> f64 {
    logsumexp(t.as_slice().expect("contiguous")) - (t.len() as f64).ln()
}

/// Solves the dual tilting problem for a fixed moment matrix.
pub fn solve_lambda(
    g: &Array2<f64>,
    warm_start: Option<&Array1<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<EtelSolution, EtelError> {
    assert!(tol > 0.0, "solve_lambda: tol must be positive");
    let (n, d) = g.dim();
    assert!(n > 0, "solve_lambda: empty moment matrix");
    assert!(g.iter().all(|v| v.is_finite()), "solve_lambda: non-finite moment matrix");

    let ln_n = (n as f64).ln();
    // infeasibility certificate margin; feasible instances keep log f >= -log n
    let infeasible_below = -ln_n - 1e-9;

    let mut lambda = match warm_start {
        Some(w) => {
            assert_eq!(w.len(), d, "warm start has wrong dimension");
            w.clone()
        }
        None => Array1::zeros(d),
    };
    let mut t = g.dot(&lambda);
    let mut cur = log_f(&t);
    let mut history = vec![cur];
    if cur < infeasible_below {
        return Err(EtelError::DualUnbounded { reason: "objective below 1/n at start" });
    }

    // convergence also requires the weighted moment residual to clear the
    // documented bound; the Newton decrement alone can satisfy `tol` while
    // the residual lags on ill-conditioned rows
    let mean_row_norm = (0..n)
        .map(|i| g.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / n as f64;
    let residual_bound = 1e-8 * (1.0 + mean_row_norm);

    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;

    for _ in 0..max_iter {
        // scaled Hessian and gradient; the common factor exp(max t) cancels
        // in the Newton direction
        let shift = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut h = Array2::<f64>::zeros((d, d));
        let mut gr = Array1::<f64>::zeros(d);
        let mut wsum = 0.0;
        for i in 0..n {
            let w = (t[i] - shift).exp();
            wsum += w;
            let row = g.row(i);
            for a in 0..d {
                let wa = w * row[a];
                gr[a] += wa;
                for b in a..d {
                    h[[a, b]] += wa * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[[a, b]] = h[[b, a]];
            }
        }
        let nf = n as f64;
        gr.mapv_inplace(|v| v / nf);
        h.mapv_inplace(|v| v / nf);

        if gr.iter().all(|v| *v == 0.0) {
            grad_norm = 0.0;
            converged = true;
            break;
        }

        // weighted residual sum_i p_i g_i = G / f in the shifted scale
        let residual_norm = gr.iter().map(|v| v * v).sum::<f64>().sqrt() / (wsum / nf);

        let dir = match cholesky(&h) {
            Some(l) => cholesky_solve(&l, &gr),
            None => {
                // one shot of Tikhonov jitter; H is PSD by construction so
                // exact singularity means a degenerate moment matrix
                let ridge = 1e-10 * h.diag().sum() / d as f64;
                let mut hj = h.clone();
                for a in 0..d {
                    hj[[a, a]] += ridge;
                }
                match cholesky(&hj) {
                    Some(l) => cholesky_solve(&l, &gr),
                    None => return Err(EtelError::SingularHessian),
                }
            }
        };

        grad_norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if grad_norm <= tol && residual_norm <= residual_bound {
            converged = true;
            break;
        }

        iterations += 1;
        let mut gamma = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &lambda - &(gamma * &dir);
            let t_cand = g.dot(&cand);
            let f_cand = log_f(&t_cand);
            if f_cand <= cur {
                lambda = cand;
                t = t_cand;
                cur = f_cand;
                accepted = true;
                break;
            }
            gamma *= 0.5;
        }
        if !accepted {
            return Err(EtelError::DualUnbounded { reason: "step halving exhausted" });
        }
        history.push(cur);
        if cur < infeasible_below {
            return Err(EtelError::DualUnbounded { reason: "objective below 1/n" });
        }
        if lambda.iter().map(|v| v * v).sum::<f64>().sqrt() > LAMBDA_NORM_CAP {
            return Err(EtelError::DualUnbounded { reason: "multiplier norm cap" });
        }
    }

    // weights via log-sum-exp; log ETEL = sum t_i - n * lse(t)
    let lse = logsumexp(t.as_slice().expect("contiguous"));
    let weights = t.mapv(|ti| (ti - lse).exp());
    let mut tsum = KahanSum::new();
    for &ti in t.iter() {
        tsum.add(ti);
    }
    let log_etel = tsum.value() - n as f64 * lse;

    Ok(EtelSolution { lambda, weights, log_etel, iterations, grad_norm, converged, log_f_history: history })
}

/// Convenience wrapper with the default tolerance and iteration budget.
pub fn solve_lambda_default(
    g: &Array2<f64>,
    warm_start: Option<&Array1<f64>>,
) -> Result<EtelSolution, EtelError> {
    solve_lambda(g, warm_start, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Stacks the moment matrix at `theta` and solves the tilting problem.
pub fn log_etel_at(
    model: &dyn LossModel,
    data: &Dataset,
    theta: &[f64],
    warm_start: Option<&Array1<f64>>,
) -> Result<EtelSolution, EtelError> {
    let g = moment_matrix(model, data, theta)?;
    solve_lambda_default(&g, warm_start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::loss::squared_loss;
    use crate::testkit;
    use ndarray::{array, Array2};
    use rand::Rng;

    #[test]
    fn zero_mean_rows_solve_at_zero() {
        let g = array![[-1.0], [1.0]];
        let sol = solve_lambda_default(&g, None).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.lambda[0], 0.0);
        assert_eq!(sol.iterations, 0);
        assert!((sol.weights[0] - 0.5).abs() < 1e-15);
        assert!((sol.weights[1] - 0.5).abs() < 1e-15);
        assert!((sol.log_etel - (-2.0 * 2.0f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn small_instance_matches_grid_oracle() {
        let g = array![[-1.0], [0.0], [2.0]];
        let sol = solve_lambda_default(&g, None).unwrap();
        let rows = [-1.0, 0.0, 2.0];
        let oracle_lambda = testkit::dual_grid_oracle(&rows);
        assert!((sol.lambda[0] - oracle_lambda).abs() < 1e-6);

        let lse = crate::math::logsumexp(&rows.map(|r| oracle_lambda * r));
        let oracle_log_etel: f64 =
            rows.iter().map(|r| oracle_lambda * r - lse).sum();
        assert!((sol.log_etel - oracle_log_etel).abs() < 1e-6);
    }

    #[test]
    fn same_sign_rows_are_unbounded() {
        let g = array![[1.0], [2.0]];
        assert!(matches!(
            solve_lambda_default(&g, None),
            Err(EtelError::DualUnbounded { .. })
        ));
    }

    #[test]
    fn weights_match_primal_simplex_oracle() {
        let mut rng = crate::rng::substream(23, crate::rng::Domain::Data, 0, 0);
        for _ in 0..20 {
            let n = rng.gen_range(3..=6);
            let rows: Vec<f64> = loop {
                let cand: Vec<f64> =
                    (0..n).map(|_| rng.gen_range(-3i32..=3) as f64).collect();
                let has_pos = cand.iter().any(|v| *v > 0.0);
                let has_neg = cand.iter().any(|v| *v < 0.0);
                if has_pos && has_neg {
                    break cand;
                }
            };
            let g = Array2::from_shape_vec((n, 1), rows.clone()).unwrap();
            let sol = solve_lambda_default(&g, None).unwrap();
            let primal = testkit::primal_simplex_oracle(&rows);
            for i in 0..n {
                assert!(
                    (sol.weights[i] - primal[i]).abs() < 1e-3,
                    "weight {i}: {} vs oracle {}",
                    sol.weights[i],
                    primal[i]
                );
            }
        }
    }

    #[test]
    fn solution_invariants_hold() {
        let mut rng = crate::rng::substream(29, crate::rng::Domain::Data, 0, 1);
        for _ in 0..50 {
            let n = 40;
            let g = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0) + 0.1);
            let sol = match solve_lambda_default(&g, None) {
                Ok(s) => s,
                Err(_) => continue,
            };
            assert!(sol.weights.iter().all(|w| *w > 0.0));
            assert!((sol.weights.sum() - 1.0).abs() < 1e-12);
            // constraint residual
            let resid = g.t().dot(&sol.weights);
            let mean_row_norm = (0..n)
                .map(|i| g.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum::<f64>()
                / n as f64;
            let rs = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(rs <= 1e-8 * (1.0 + mean_row_norm));
            // KL non-negativity
            assert!(sol.log_etel <= -(n as f64) * (n as f64).ln() + 1e-10);
            let kl: f64 =
                sol.weights.iter().map(|w| w * (n as f64 * w).ln()).sum();
            assert!(kl >= -1e-12);
            // dual optimality in the unscaled gradient
            let max_row_norm = (0..n)
                .map(|i| g.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            let t = g.dot(&sol.lambda);
            let mut gr = [0.0f64; 2];
            for i in 0..n {
                let e = t[i].exp();
                gr[0] += e * g[[i, 0]];
                gr[1] += e * g[[i, 1]];
            }
            let gn = (gr[0] * gr[0] + gr[1] * gr[1]).sqrt() / n as f64;
            assert!(gn <= 10.0 * DEFAULT_TOL * (1.0 + max_row_norm));
            // damping is monotone
            for w in sol.log_f_history.windows(2) {
                assert!(w[1] < w[0] || (w[1] - w[0]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn warm_start_is_consistent() {
        let mut rng = crate::rng::substream(31, crate::rng::Domain::Data, 0, 2);
        let g = Array2::from_shape_fn((30, 2), |_| rng.gen_range(-1.0..1.0));
        let cold = solve_lambda_default(&g, None).unwrap();
        let warm = solve_lambda_default(&g, Some(&cold.lambda)).unwrap();
        for j in 0..2 {
            assert!((cold.lambda[j] - warm.lambda[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn recentring_a_shifted_matrix_recovers_the_original() {
        let mut rng = crate::rng::substream(37, crate::rng::Domain::Data, 0, 3);
        // mean-zero feasible base instance
        let half: Vec<f64> = (0..10).map(|_| rng.gen_range(0.2..1.5)).collect();
        let rows: Vec<f64> = half.iter().cloned().chain(half.iter().map(|v| -v)).collect();
        let g0 = Array2::from_shape_vec((20, 1), rows).unwrap();
        let base = solve_lambda_default(&g0, None).unwrap();

        // small shift keeps feasibility; recentring recovers the base instance
        let shifted = &g0 + 0.05;
        let shifted_sol = solve_lambda_default(&shifted, None).unwrap();
        assert!(shifted_sol.lambda[0] != base.lambda[0]);
        let mean = shifted.mean_axis(ndarray::Axis(0)).unwrap();
        let recentred = &shifted - &mean;
        let re = solve_lambda_default(&recentred, None).unwrap();
        assert_eq!(re.lambda[0], base.lambda[0]);
        assert_eq!(re.log_etel, base.log_etel);

        // a large shift moves zero outside the hull
        let far = &g0 + 10.0;
        assert!(matches!(
            solve_lambda_default(&far, None),
            Err(EtelError::DualUnbounded { .. })
        ));
    }

    #[test]
    fn erm_of_smooth_model_gives_uniform_weights() {
        let values = array![0.4, -1.2, 2.2, 0.1, -0.6];
        let n = values.len();
        let mean = values.sum() / n as f64;
        let data = Dataset::location(values).unwrap();
        let sol = log_etel_at(&squared_loss(), &data, &[mean], None).unwrap();
        assert!(sol.converged);
        assert!(sol.lambda[0].abs() < 1e-12);
        for w in sol.weights.iter() {
            assert!((w - 1.0 / n as f64).abs() < 1e-12);
        }
        assert!((sol.log_etel - (-(n as f64) * (n as f64).ln())).abs() < 1e-10);
    }

    #[test]
    fn two_point_location_log_etel() {
        let data = Dataset::location(array![-1.0, 1.0]).unwrap();
        let sol = log_etel_at(&squared_loss(), &data, &[0.0], None).unwrap();
        assert!((sol.log_etel - (-2.0 * 2.0f64.ln())).abs() < 1e-14);
    }
}
