//! Posterior summaries, credible regions, and chain diagnostics.
//!
//! Per-coordinate credible intervals are empirical quantiles (type-7
//! interpolation) of the retained draws; the simultaneous region is the
//! ellipse `(theta - mean)' Cov^{-1} (theta - mean) <= q` with `q` the
//! upper-alpha chi-square quantile, computed internally from the
//! regularized incomplete gamma. Convergence checks are the classical
//! potential scale reduction and an initial-positive-sequence truncated
//! effective sample size.

use crate::math::{chi2_quantile, cholesky, quantile_type7, KahanSum};
use crate::sampler::Chain;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("need at least {need} post-burn-in draws, have {have}")]
    TooFewDraws { need: usize, have: usize },
    #[error("posterior covariance is singular; the ellipse is undefined")]
    SingularCovariance,
    #[error("need at least two chains of equal nonzero length")]
    BadChainSet,
}

/// Moments, intervals, and the credible-ellipse radius computed from one
/// set of draws.
#[derive(Debug, Clone)]
pub struct CredibleSummary {
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
    /// Per-coordinate `(alpha/2, 1 - alpha/2)` quantile intervals.
    pub per_coord_intervals: Vec<(f64, f64)>,
    /// Upper-alpha chi-square quantile with `d` degrees of freedom.
    pub ellipse_radius: f64,
    /// Credible level `1 - alpha`.
    pub level: f64,
    /// Set when the covariance has no Cholesky factor (constant chain).
    pub singular: bool,
}

/// Summarizes draws after dropping `burn_in` rows. Requires at least
/// `10 d` retained draws.
pub fn summarize(
    draws: ArrayView2<'_, f64>,
    burn_in: usize,
    level: f64,
) -> Result<CredibleSummary, InferenceError> {
    assert!(level > 0.0 && level < 1.0, "level must be in (0,1)");
    let d = draws.ncols();
    let total = draws.nrows();
    let kept = total.saturating_sub(burn_in);
    if kept < 10 * d {
        return Err(InferenceError::TooFewDraws { need: 10 * d, have: kept });
    }
    let view = draws.slice(ndarray::s![burn_in.., ..]);
    let t = view.nrows();

    // two-pass mean and covariance with compensated sums
    let mut mean = Array1::<f64>::zeros(d);
    for j in 0..d {
        let mut acc = KahanSum::new();
        for i in 0..t {
            acc.add(view[[i, j]]);
        }
        mean[j] = acc.value() / t as f64;
    }
    let mut cov = Array2::<f64>::zeros((d, d));
    for a in 0..d {
        for b in a..d {
            let mut acc = KahanSum::new();
            for i in 0..t {
                acc.add((view[[i, a]] - mean[a]) * (view[[i, b]] - mean[b]));
            }
            let v = acc.value() / (t as f64 - 1.0);
            cov[[a, b]] = v;
            cov[[b, a]] = v;
        }
    }

    let alpha = 1.0 - level;
    let mut intervals = Vec::with_capacity(d);
    let mut col = vec![0.0; t];
    for j in 0..d {
        for i in 0..t {
            col[i] = view[[i, j]];
        }
        col.sort_by(|a, b| a.partial_cmp(b).expect("NaN draw"));
        intervals.push((quantile_type7(&col, alpha / 2.0), quantile_type7(&col, 1.0 - alpha / 2.0)));
    }

    let singular = cholesky(&cov).is_none();
    Ok(CredibleSummary {
        mean,
        covariance: cov,
        per_coord_intervals: intervals,
        ellipse_radius: chi2_quantile(level, d),
        level,
        singular,
    })
}

/// Membership in the closed credible ellipse
/// `(theta - mean)' Cov^{-1} (theta - mean) <= q_alpha`.
pub fn ellipse_contains(summary: &CredibleSummary, theta: &[f64]) -> Result<bool, InferenceError> {
    let l = cholesky(&summary.covariance).ok_or(InferenceError::SingularCovariance)?;
    let diff = Array1::from_iter(theta.iter().zip(summary.mean.iter()).map(|(t, m)| t - m));
    let x = crate::math::cholesky_solve(&l, &diff);
    let maha: f64 = diff.dot(&x);
    Ok(maha <= summary.ellipse_radius)
}

/// Classical potential scale reduction, per coordinate:
/// `sqrt(((T-1)/T W + B/T) / W)` with within-variance `W` and
/// between-variance `B`.
pub fn gelman_rubin(chains: &[ArrayView2<'_, f64>]) -> Result<Vec<f64>, InferenceError> {
    if chains.len() < 2 {
        return Err(InferenceError::BadChainSet);
    }
    let t = chains[0].nrows();
    let d = chains[0].ncols();
    if t < 2 || chains.iter().any(|c| c.nrows() != t || c.ncols() != d) {
        return Err(InferenceError::BadChainSet);
    }
    let m = chains.len();
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let mut means = Vec::with_capacity(m);
        let mut vars = Vec::with_capacity(m);
        for c in chains {
            let col = c.column(j);
            let mu = col.sum() / t as f64;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (t as f64 - 1.0);
            means.push(mu);
            vars.push(var);
        }
        let w = vars.iter().sum::<f64>() / m as f64;
        let grand = means.iter().sum::<f64>() / m as f64;
        let b_over_t =
            means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m as f64 - 1.0);
        let rhat = if w == 0.0 {
            if b_over_t == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            (((t as f64 - 1.0) / t as f64 * w + b_over_t) / w).sqrt()
        };
        out.push(rhat);
    }
    Ok(out)
}

/// Split-half variant for a single chain: first half vs second half.
pub fn gelman_rubin_split(draws: ArrayView2<'_, f64>) -> Result<Vec<f64>, InferenceError> {
    let t = draws.nrows();
    if t < 4 {
        return Err(InferenceError::BadChainSet);
    }
    let half = t / 2;
    let a = draws.slice(ndarray::s![..half, ..]);
    let b = draws.slice(ndarray::s![t - half.., ..]);
    gelman_rubin(&[a, b])
}

/// Effective sample size `T / (1 + 2 sum rho_k)` with Geyer's
/// initial-positive-sequence truncation; `None` for a constant series.
/// Capped at `1.2 T` as a guard against anticorrelation artifacts.
pub fn effective_sample_size(series: &[f64]) -> Option<f64> {
    let t = series.len();
    if t < 4 {
        return None;
    }
    let mu = series.iter().sum::<f64>() / t as f64;
    let gamma = |k: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..t - k {
            acc += (series[i] - mu) * (series[i + k] - mu);
        }
        acc / t as f64
    };
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return None;
    }
    let mut paired_sum = 0.0;
    let mut m = 0usize;
    loop {
        let k0 = 2 * m;
        let k1 = 2 * m + 1;
        if k1 >= t {
            break;
        }
        let pair = (gamma(k0) + gamma(k1)) / g0;
        if pair <= 0.0 {
            break;
        }
        paired_sum += pair;
        m += 1;
    }
    let tau = (2.0 * paired_sum - 1.0).max(1.0 / 1.2);
    Some(t as f64 / tau)
}

/// JSON-friendly convergence report: potential scale reduction per
/// coordinate at growing prefixes, effective sample sizes, acceptance
/// rates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiagnosticReport {
    pub chains: usize,
    pub iters: usize,
    pub dim: usize,
    pub burn_in: usize,
    /// True when a single chain was diagnosed by splitting it in half.
    pub split_half: bool,
    /// Prefix lengths at which the scale reduction was evaluated.
    pub checkpoints: Vec<usize>,
    /// `rhat[checkpoint][coordinate]`.
    pub rhat: Vec<Vec<f64>>,
    /// Post-burn-in effective sample size per coordinate, summed over
    /// chains; `None` marks a degenerate (constant) series.
    pub ess: Vec<Option<f64>>,
    pub acceptance_rates: Vec<f64>,
}

/// Builds the report from finished chains (all the same shape). With a
/// single chain the scale reduction uses the split-half variant.
pub fn diagnostic_report(
    chains: &[&Chain],
    n_checkpoints: usize,
) -> Result<DiagnosticReport, InferenceError> {
    if chains.is_empty() {
        return Err(InferenceError::BadChainSet);
    }
    let iters = chains[0].iters();
    let dim = chains[0].dim();
    if chains.iter().any(|c| c.iters() != iters || c.dim() != dim) {
        return Err(InferenceError::BadChainSet);
    }
    let split_half = chains.len() == 1;
    let burn_in = chains.iter().map(|c| c.burn_in).max().unwrap();

    let n_checkpoints = n_checkpoints.max(1);
    let mut checkpoints = Vec::new();
    for k in 1..=n_checkpoints {
        let len = iters * k / n_checkpoints;
        if len >= 4 {
            checkpoints.push(len);
        }
    }
    checkpoints.dedup();

    let mut rhat = Vec::with_capacity(checkpoints.len());
    for &len in &checkpoints {
        let r = if split_half {
            gelman_rubin_split(chains[0].draws.slice(ndarray::s![..len, ..]))?
        } else {
            let views: Vec<ArrayView2<'_, f64>> =
                chains.iter().map(|c| c.draws.slice(ndarray::s![..len, ..])).collect();
            gelman_rubin(&views)?
        };
        rhat.push(r);
    }

    let mut ess = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut total = 0.0;
        let mut defined = false;
        for c in chains {
            let col: Vec<f64> =
                c.post_burn_in().column(j).iter().cloned().collect();
            if let Some(e) = effective_sample_size(&col) {
                total += e;
                defined = true;
            }
        }
        ess.push(if defined { Some(total) } else { None });
    }

    Ok(DiagnosticReport {
        chains: chains.len(),
        iters,
        dim,
        burn_in,
        split_half,
        checkpoints,
        rhat,
        ess,
        acceptance_rates: chains.iter().map(|c| c.acceptance_rate).collect(),
    })
}
