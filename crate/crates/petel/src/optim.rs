//! Subgradient descent for empirical risk minimization.
//!
//! One optimizer serves every consumer (bootstrap resamples, constrained
//! sparse models, penalty tuning, population-minimizer oracles): full-batch
//! (sub)gradient steps `c / sqrt(t)` with optional box projection and
//! tail averaging. Mean moments accumulate with compensated summation,
//! in parallel chunks for large samples; chunk boundaries are fixed so
//! results do not depend on the worker count.

use crate::data::Dataset;
use crate::loss::{empirical_risk, LossError, LossModel};
use crate::math::KahanSum;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// How chain and optimizer initial points are produced.
#[derive(Debug, Clone)]
pub enum InitRule {
    Zero,
    Point(Vec<f64>),
    /// Independent normal coordinates around `mean` with common `sd`.
    Normal { mean: Vec<f64>, sd: f64 },
}

impl InitRule {
    pub fn draw(&self, d: usize, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            InitRule::Zero => vec![0.0; d],
            InitRule::Point(p) => {
                assert_eq!(p.len(), d, "init point has wrong dimension");
                p.clone()
            }
            InitRule::Normal { mean, sd } => {
                assert_eq!(mean.len(), d, "init mean has wrong dimension");
                mean.iter()
                    .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimConfig {
    /// Number of subgradient steps.
    pub iterations: usize,
    /// Step size at iteration t is `step_c / sqrt(t)`.
    pub step_c: f64,
    /// Average the iterates of the second half of the run.
    pub averaging: bool,
    /// Optional box projection (per-coordinate lo/hi).
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
    /// Relative risk-improvement threshold for the convergence flag.
    pub tol: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { iterations: 2000, step_c: 0.5, averaging: true, bounds: None, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct ErmResult {
    pub theta: Vec<f64>,
    pub risk: f64,
    pub iterations: usize,
    /// False when the risk was still improving at the end of the budget.
    pub converged: bool,
}

/// Mean moment vector `n^{-1} sum_i g(X_i, theta)`, compensated and
/// chunk-parallel with a fixed chunk layout.
pub fn mean_moment(
    model: &dyn LossModel,
    data: &Dataset,
    theta: &[f64],
) -> Result<Vec<f64>, LossError> {
    model.validate(data)?;
    let d = model.dim(data);
    if theta.len() != d {
        return Err(LossError::DimensionMismatch {
            model: model.name(),
            expected: d,
            got: theta.len(),
        });
    }
    let n = data.n();
    const CHUNK: usize = 8192;
    let sum = if n < 2 * CHUNK {
        chunk_moment_sum(model, data, theta, 0, n)
    } else {
        let n_chunks = n.div_ceil(CHUNK);
        let partials: Vec<Vec<f64>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| chunk_moment_sum(model, data, theta, c * CHUNK, ((c + 1) * CHUNK).min(n)))
            .collect();
        let mut acc: Vec<KahanSum> = vec![KahanSum::new(); d];
        for part in &partials {
            for (a, &v) in acc.iter_mut().zip(part) {
                a.add(v);
            }
        }
        acc.iter().map(|a| a.value()).collect()
    };
    Ok(sum.iter().map(|s| s / n as f64).collect())
}

fn chunk_moment_sum(
    model: &dyn LossModel,
    data: &Dataset,
    theta: &[f64],
    lo: usize,
    hi: usize,
) -> Vec<f64> {
    let d = theta.len();
    let mut acc: Vec<KahanSum> = vec![KahanSum::new(); d];
    let mut row = vec![0.0; d];
    for i in lo..hi {
        model.moment_into(data, i, theta, &mut row);
        for (a, &v) in acc.iter_mut().zip(&row) {
            a.add(v);
        }
    }
    acc.iter().map(|a| a.value()).collect()
}

fn project(theta: &mut [f64], bounds: &Option<(Vec<f64>, Vec<f64>)>) {
    if let Some((lo, hi)) = bounds {
        for ((t, &l), &h) in theta.iter_mut().zip(lo).zip(hi) {
            *t = t.clamp(l, h);
        }
    }
}

/// Subgradient descent with diminishing steps from a single start.
pub fn subgradient_descent(
    model: &dyn LossModel,
    data: &Dataset,
    init: &[f64],
    cfg: &OptimConfig,
) -> Result<ErmResult, LossError> {
    let d = model.dim(data);
    assert_eq!(init.len(), d, "init has wrong dimension");
    let mut theta = init.to_vec();
    project(&mut theta, &cfg.bounds);

    let mut best_theta = theta.clone();
    let mut best_risk = empirical_risk(model, data, &theta)?;
    let mut risk_at_three_quarters = None;

    let half = cfg.iterations / 2;
    let mut avg = vec![0.0; d];
    let mut avg_count = 0usize;

    for t in 1..=cfg.iterations {
        let g = mean_moment(model, data, &theta)?;
        let step = cfg.step_c / (t as f64).sqrt();
        for (th, gi) in theta.iter_mut().zip(&g) {
            *th -= step * gi;
        }
        project(&mut theta, &cfg.bounds);
        if cfg.averaging && t > half {
            for (a, &th) in avg.iter_mut().zip(&theta) {
                *a += th;
            }
            avg_count += 1;
        }
        if t % 100 == 0 || t == cfg.iterations {
            if let Ok(r) = empirical_risk(model, data, &theta) {
                if r < best_risk {
                    best_risk = r;
                    best_theta = theta.clone();
                }
            }
            if risk_at_three_quarters.is_none() && 4 * t >= 3 * cfg.iterations {
                risk_at_three_quarters = Some(best_risk);
            }
        }
    }

    if avg_count > 0 {
        let averaged: Vec<f64> = avg.iter().map(|a| a / avg_count as f64).collect();
        if let Ok(r) = empirical_risk(model, data, &averaged) {
            if r < best_risk {
                best_risk = r;
                best_theta = averaged;
            }
        }
    }

    let converged = (risk_at_three_quarters.unwrap_or(f64::INFINITY) - best_risk)
        <= cfg.tol * (1.0 + best_risk.abs());
    Ok(ErmResult { theta: best_theta, risk: best_risk, iterations: cfg.iterations, converged })
}

/// Multistart wrapper: runs the descent from each start and keeps the
/// lowest-risk result. Starts run in parallel.
pub fn erm_multistart(
    model: &dyn LossModel,
    data: &Dataset,
    starts: &[Vec<f64>],
    cfg: &OptimConfig,
) -> Result<ErmResult, LossError> {
    assert!(!starts.is_empty());
    let results: Vec<Result<ErmResult, LossError>> = starts
        .par_iter()
        .map(|s| subgradient_descent(model, data, s, cfg))
        .collect();
    let mut best: Option<ErmResult> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.risk < b.risk) {
            best = Some(r);
        }
    }
    Ok(best.expect("nonempty starts"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{check_loss, squared_loss};
    use ndarray::{array, Array1, Array2};
    use rand::Rng;

    #[test]
    fn least_squares_slope_recovered() {
        let mut rng = crate::rng::substream(3, crate::rng::Domain::Init, 0, 0);
        let n = 400;
        let x = Array2::from_shape_fn((n, 1), |_| rng.gen_range(-2.0..2.0f64));
        let y = Array1::from_shape_fn(n, |i| 1.7 * x[[i, 0]] + 0.05 * rng.gen_range(-1.0..1.0));
        let data = Dataset::regression(x.clone(), y.clone()).unwrap();
        let res = subgradient_descent(
            &squared_loss(),
            &data,
            &[0.0],
            &OptimConfig { iterations: 3000, ..Default::default() },
        )
        .unwrap();
        let num: f64 = (0..n).map(|i| x[[i, 0]] * y[i]).sum();
        let den: f64 = (0..n).map(|i| x[[i, 0]] * x[[i, 0]]).sum();
        assert!((res.theta[0] - num / den).abs() < 1e-3);
        assert!(res.converged);
    }

    #[test]
    fn median_via_check_loss() {
        let values = array![-0.3, 0.1, 0.2, 0.9, 5.0];
        let data = Dataset::location(values).unwrap();
        let res = subgradient_descent(
            &check_loss(0.5),
            &data,
            &[0.0],
            &OptimConfig { iterations: 4000, step_c: 0.3, ..Default::default() },
        )
        .unwrap();
        assert!((res.theta[0] - 0.2).abs() < 0.02);
    }

    #[test]
    fn mean_moment_matches_columnwise_mean() {
        let mut rng = crate::rng::substream(5, crate::rng::Domain::Init, 0, 1);
        let n = 30000; // force the parallel path
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0f64));
        let y = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0f64));
        let data = Dataset::regression(x, y).unwrap();
        let theta = [0.4, -0.2];
        let m = mean_moment(&squared_loss(), &data, &theta).unwrap();
        let g = crate::loss::moment_matrix(&squared_loss(), &data, &theta).unwrap();
        let cols = g.mean_axis(ndarray::Axis(0)).unwrap();
        for j in 0..2 {
            assert!((m[j] - cols[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_respects_bounds() {
        let data = Dataset::location(array![10.0, 12.0]).unwrap();
        let cfg = OptimConfig {
            bounds: Some((vec![-1.0], vec![1.0])),
            iterations: 200,
            ..Default::default()
        };
        let res = subgradient_descent(&squared_loss(), &data, &[0.0], &cfg).unwrap();
        assert!(res.theta[0] <= 1.0 + 1e-12);
    }
}
