//! Independent oracles and helpers for the test suites.
//!
//! Nothing here is used by the estimation code paths: each oracle solves
//! its problem by brute force (grids, bisection, streaming recursions) so
//! that tests can compare two genuinely different routes to the same
//! quantity.

use crate::math::std_normal_cdf;
use ndarray::{Array1, Array2};

/// Dual oracle for one-dimensional tilting problems: minimizes
/// `f(l) = n^{-1} sum exp(l g_i)` by a coarse grid over [-10, 10]
/// followed by bisection on the (monotone) derivative.
pub fn dual_grid_oracle(g: &[f64]) -> f64 {
    let n = g.len() as f64;
    let f = |l: f64| g.iter().map(|gi| (l * gi).exp()).sum::<f64>() / n;
    let fp = |l: f64| g.iter().map(|gi| gi * (l * gi).exp()).sum::<f64>() / n;

    let step = 1e-4;
    let mut best_l = -10.0;
    let mut best_f = f(best_l);
    let mut l = -10.0;
    while l <= 10.0 {
        let v = f(l);
        if v < best_f {
            best_f = v;
            best_l = l;
        }
        l += step;
    }

    let (mut lo, mut hi) = (best_l - step, best_l + step);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fp(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Primal oracle for one-dimensional tilting problems: maximizes the
/// tilted entropy `sum -w_i log(n w_i)` over the simplex intersected with
/// `sum w_i g_i = 0` by a multilevel grid over the free coordinates, with
/// the last two weights eliminated through the two linear constraints.
pub fn primal_simplex_oracle(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    assert!(n >= 2);
    // pivot pair with distinct g values so the 2x2 elimination is solvable
    let a = 0;
    let b = (1..n).find(|&j| g[j] != g[a]).expect("degenerate instance: all g equal");
    let free: Vec<usize> = (0..n).filter(|&j| j != a && j != b).collect();

    let entropy = |w: &[f64]| -> f64 {
        let nf = n as f64;
        w.iter().map(|&wi| if wi > 0.0 { -wi * (nf * wi).ln() } else { 0.0 }).sum()
    };

    // completes free weights to a full vector, or None when infeasible
    let complete = |wf: &[f64]| -> Option<Vec<f64>> {
        let s: f64 = wf.iter().sum();
        let m: f64 = wf.iter().zip(&free).map(|(w, &j)| w * g[j]).sum();
        let wa = ((1.0 - s) * g[b] + m) / (g[b] - g[a]);
        let wb = (1.0 - s) - wa;
        if wa < -1e-12 || wb < -1e-12 {
            return None;
        }
        let mut w = vec![0.0; n];
        for (k, &j) in free.iter().enumerate() {
            w[j] = wf[k];
        }
        w[a] = wa.max(0.0);
        w[b] = wb.max(0.0);
        Some(w)
    };

    if free.is_empty() {
        return complete(&[]).expect("two-point instance infeasible");
    }

    let mut centers = vec![1.0 / n as f64; free.len()];
    let mut span = 1.0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    const POINTS: usize = 13;
    for _level in 0..14 {
        let mut idx = vec![0usize; free.len()];
        loop {
            let wf: Vec<f64> = idx
                .iter()
                .zip(&centers)
                .map(|(&i, &c)| {
                    (c - span + 2.0 * span * i as f64 / (POINTS - 1) as f64).clamp(0.0, 1.0)
                })
                .collect();
            if let Some(w) = complete(&wf) {
                let e = entropy(&w);
                if best.as_ref().is_none_or(|(be, _)| e > *be) {
                    best = Some((e, w));
                }
            }
            // odometer over the grid
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < POINTS {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == free.len() {
                    break;
                }
            }
            if k == free.len() {
                break;
            }
        }
        if let Some((_, w)) = &best {
            for (k, &j) in free.iter().enumerate() {
                centers[k] = w[j];
            }
        }
        span *= 0.35;
    }
    best.expect("no feasible point found").1
}

/// Streaming (Welford) mean and covariance, the cross-check for the
/// two-pass summary statistics.
pub fn streaming_mean_cov(draws: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let (t, d) = draws.dim();
    let mut mean = Array1::<f64>::zeros(d);
    let mut m2 = Array2::<f64>::zeros((d, d));
    for i in 0..t {
        let row = draws.row(i);
        let k = (i + 1) as f64;
        let delta = &row.to_owned() - &mean;
        mean = &mean + &(&delta / k);
        let delta2 = &row.to_owned() - &mean;
        for a in 0..d {
            for b in 0..d {
                m2[[a, b]] += delta[a] * delta2[b];
            }
        }
    }
    (mean, m2 / (t as f64 - 1.0))
}

/// One-sample Kolmogorov–Smirnov statistic against the standard normal.
pub fn ks_statistic_std_normal(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let cdf = std_normal_cdf(x);
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        d = d.max(hi.max(lo));
    }
    d
}

/// Two-sample Kolmogorov–Smirnov statistic and its asymptotic p-value
/// (Stephens' small-sample correction on the Kolmogorov tail series).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xb.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xa.len(), xb.len());
    let mut i = 0;
    let mut j = 0;
    let mut d = 0.0f64;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..101 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

/// AR(1) path `x_t = phi x_{t-1} + e_t` with standard normal innovations.
pub fn ar1_path(phi: f64, len: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut out = Vec::with_capacity(len);
    let mut x = 0.0;
    for _ in 0..len {
        let e: f64 = StandardNormal.sample(rng);
        x = phi * x + e;
        out.push(x);
    }
    out
}
