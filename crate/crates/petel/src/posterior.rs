//! Unnormalized log-posteriors over risk-minimization parameters.
//!
//! Three modes share one density assembly:
//!
//! ```text
//! petel:  log pi(theta) + log ETEL(theta) - alpha_n R_n(theta)
//! etel:   the same with alpha_n = 0
//! gibbs:  log pi(theta) - (n beta) R_n(theta)
//! ```
//!
//! A parameter where the tilting dual has no solution carries zero
//! tilted-likelihood mass; such evaluations (and any loss overflow)
//! report `-inf` with a flag instead of failing, so Metropolis–Hastings
//! simply rejects the move.

use crate::data::Dataset;
use crate::etel::{log_etel_at, EtelError, EtelSolution};
use crate::loss::{empirical_risk, LossError, LossModel};
use crate::math::{cholesky, cholesky_logdet};
use crate::sampler::{run_chain_indexed, ProposalConfig, SamplerError};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("prior: {0}")]
    InvalidPrior(String),
    #[error("posterior spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("no penalty matched the risk minimizer after {increments} increments (last alpha {last_alpha})")]
    NoAlphaFound { last_alpha: f64, increments: usize },
    #[error("no feasible initial point found for the tuning chains")]
    NoFeasibleInit,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

type CustomLogDensity = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Prior over the parameter vector. Densities are `-inf` off support.
#[derive(Clone)]
pub enum Prior {
    UniformBox { lo: Array1<f64>, hi: Array1<f64>, log_volume: f64 },
    Gaussian { mean: Array1<f64>, chol: Array2<f64>, log_norm: f64 },
    Custom(CustomLogDensity),
}

impl std::fmt::Debug for Prior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Prior::UniformBox { lo, hi, .. } => {
                write!(f, "UniformBox(lo={lo:?}, hi={hi:?})")
            }
            Prior::Gaussian { mean, .. } => write!(f, "Gaussian(mean={mean:?})"),
            Prior::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Prior {
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, PosteriorError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(PosteriorError::InvalidPrior("box bounds length mismatch".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !matches!(a.partial_cmp(b), Some(std::cmp::Ordering::Less))) {
            return Err(PosteriorError::InvalidPrior("box needs lo < hi per coordinate".into()));
        }
        let log_volume = lo.iter().zip(&hi).map(|(a, b)| (b - a).ln()).sum();
        Ok(Prior::UniformBox { lo: Array1::from_vec(lo), hi: Array1::from_vec(hi), log_volume })
    }

    /// Symmetric box `[-half, half]^d`.
    pub fn centered_box(half: f64, d: usize) -> Self {
        Self::uniform_box(vec![-half; d], vec![half; d]).expect("half > 0")
    }

    pub fn gaussian(mean: Vec<f64>, cov: Array2<f64>) -> Result<Self, PosteriorError> {
        let d = mean.len();
        if cov.dim() != (d, d) {
            return Err(PosteriorError::InvalidPrior("covariance shape mismatch".into()));
        }
        let chol = cholesky(&cov)
            .ok_or_else(|| PosteriorError::InvalidPrior("covariance is not SPD".into()))?;
        let log_norm =
            -0.5 * (d as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * cholesky_logdet(&chol);
        Ok(Prior::Gaussian { mean: Array1::from_vec(mean), chol, log_norm })
    }

    /// Standard normal prior of dimension `d`.
    pub fn std_gaussian(d: usize) -> Self {
        Self::gaussian(vec![0.0; d], Array2::eye(d)).expect("identity is SPD")
    }

    /// Arbitrary log-density; must return `-inf` off support.
    pub fn custom(log_density: CustomLogDensity) -> Self {
        Prior::Custom(log_density)
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            Prior::UniformBox { lo, hi, log_volume } => {
                let inside = theta
                    .iter()
                    .zip(lo.iter())
                    .zip(hi.iter())
                    .all(|((t, l), h)| *t >= *l && *t <= *h);
                if inside {
                    -log_volume
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Gaussian { mean, chol, log_norm } => {
                let diff = Array1::from_iter(theta.iter().zip(mean.iter()).map(|(t, m)| t - m));
                let z = cholesky_solve_forward(chol, &diff);
                log_norm - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
            }
            Prior::Custom(f) => f(theta),
        }
    }

    pub fn in_support(&self, theta: &[f64]) -> bool {
        self.log_density(theta) > f64::NEG_INFINITY
    }

    /// Draws from the prior when it has a sampler (box and gaussian).
    pub fn sample(&self, rng: &mut impl Rng) -> Option<Vec<f64>> {
        match self {
            Prior::UniformBox { lo, hi, .. } => Some(
                lo.iter().zip(hi.iter()).map(|(l, h)| rng.gen_range(*l..*h)).collect(),
            ),
            Prior::Gaussian { mean, chol, .. } => {
                let d = mean.len();
                let z: Vec<f64> =
                    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let mut out = mean.to_vec();
                for i in 0..d {
                    for j in 0..=i {
                        out[i] += chol[[i, j]] * z[j];
                    }
                }
                Some(out)
            }
            Prior::Custom(_) => None,
        }
    }
}

/// Forward substitution `L z = b` (whitening for the gaussian prior).
fn cholesky_solve_forward(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut z = b.clone();
    for i in 0..n {
        for k in 0..i {
            let t = z[k];
            z[i] -= l[[i, k]] * t;
        }
        z[i] /= l[[i, i]];
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorMode {
    Petel,
    Etel,
    Gibbs,
}

/// Fully specified unnormalized posterior: loss model, data, prior, and
/// the mode-specific rates.
#[derive(Clone)]
pub struct PosteriorSpec {
    model: Arc<dyn LossModel>,
    data: Arc<Dataset>,
    prior: Prior,
    mode: PosteriorMode,
    alpha_n: f64,
    gibbs_rate: Option<f64>,
    dim: usize,
}

/// One density evaluation. Solver failures surface as `-inf` plus a
/// flag so the sampler can reject rather than abort.
#[derive(Debug, Clone)]
pub struct LogDensityEval {
    pub value: f64,
    pub etel: Option<EtelSolution>,
    pub solver_failed: bool,
}

impl PosteriorSpec {
    pub fn petel(
        model: Arc<dyn LossModel>,
        data: Arc<Dataset>,
        prior: Prior,
        alpha_n: f64,
    ) -> Result<Self, PosteriorError> {
        if alpha_n.is_nan() || alpha_n < 0.0 {
            return Err(PosteriorError::InvalidSpec("alpha_n must be >= 0".into()));
        }
        model.validate(&data)?;
        let dim = model.dim(&data);
        Ok(Self { model, data, prior, mode: PosteriorMode::Petel, alpha_n, gibbs_rate: None, dim })
    }

    /// Tilted-likelihood posterior without penalty; identical densities to
    /// `petel` with `alpha_n = 0`.
    pub fn etel(
        model: Arc<dyn LossModel>,
        data: Arc<Dataset>,
        prior: Prior,
    ) -> Result<Self, PosteriorError> {
        let mut spec = Self::petel(model, data, prior, 0.0)?;
        spec.mode = PosteriorMode::Etel;
        Ok(spec)
    }

    /// Gibbs posterior; `gibbs_rate` is the product `n * beta`.
    pub fn gibbs(
        model: Arc<dyn LossModel>,
        data: Arc<Dataset>,
        prior: Prior,
        gibbs_rate: f64,
    ) -> Result<Self, PosteriorError> {
        if gibbs_rate.is_nan() || gibbs_rate <= 0.0 {
            return Err(PosteriorError::InvalidSpec("gibbs_rate must be > 0".into()));
        }
        model.validate(&data)?;
        let dim = model.dim(&data);
        Ok(Self {
            model,
            data,
            prior,
            mode: PosteriorMode::Gibbs,
            alpha_n: 0.0,
            gibbs_rate: Some(gibbs_rate),
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn mode(&self) -> PosteriorMode {
        self.mode
    }

    pub fn alpha_n(&self) -> f64 {
        self.alpha_n
    }

    pub fn gibbs_rate(&self) -> Option<f64> {
        self.gibbs_rate
    }

    pub fn model(&self) -> &Arc<dyn LossModel> {
        &self.model
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    /// Same spec with a different penalty (used by warm phases and tuning).
    pub fn with_alpha(&self, alpha_n: f64) -> Self {
        let mut s = self.clone();
        s.alpha_n = alpha_n;
        s
    }

    /// Unnormalized log-density at `theta`. For tilted modes the returned
    /// [`EtelSolution`] carries the multiplier for warm-start reuse.
    pub fn log_density(&self, theta: &[f64], warm_start: Option<&Array1<f64>>) -> LogDensityEval {
        let off = |failed| LogDensityEval { value: f64::NEG_INFINITY, etel: None, solver_failed: failed };
        if theta.len() != self.dim {
            return off(true);
        }
        let lp = self.prior.log_density(theta);
        if lp == f64::NEG_INFINITY {
            return off(false);
        }
        match self.mode {
            PosteriorMode::Gibbs => {
                let rate = self.gibbs_rate.expect("gibbs mode");
                match empirical_risk(self.model.as_ref(), &self.data, theta) {
                    Ok(risk) => {
                        LogDensityEval { value: lp - rate * risk, etel: None, solver_failed: false }
                    }
                    Err(_) => off(true),
                }
            }
            PosteriorMode::Etel | PosteriorMode::Petel => {
                let risk = if self.alpha_n > 0.0 {
                    match empirical_risk(self.model.as_ref(), &self.data, theta) {
                        Ok(r) => r,
                        Err(_) => return off(true),
                    }
                } else {
                    0.0
                };
                match log_etel_at(self.model.as_ref(), &self.data, theta, warm_start) {
                    Ok(sol) => LogDensityEval {
                        value: lp + sol.log_etel - self.alpha_n * risk,
                        etel: Some(sol),
                        solver_failed: false,
                    },
                    Err(EtelError::Loss(_)) => off(true),
                    Err(_) => off(true),
                }
            }
        }
    }
}

/// Default penalty rule `c * n^exponent`.
pub fn default_alpha(n: usize, c: f64, exponent: f64) -> f64 {
    assert!(n >= 1);
    c * (n as f64).powf(exponent)
}

/// Result of the penalty sweep.
#[derive(Debug, Clone)]
pub struct TunedAlpha {
    pub alpha: f64,
    /// Set when the accepted penalty exceeds the sample size; the sweep
    /// still terminates but the scale is outside the intended range.
    pub exceeds_n: bool,
    pub increments: usize,
    pub erm: Vec<f64>,
    pub posterior_mean: Vec<f64>,
}

/// Sweeps the penalty upward from `start` in increments of `step`,
/// drawing short chains from prior-dispersed starting points, until the
/// pooled posterior mean matches the empirical risk minimizer within
/// `match_tol * (1 + ||erm||)`. Caps at 20 increments.
#[allow(clippy::too_many_arguments)]
pub fn tune_alpha(
    model: Arc<dyn LossModel>,
    data: Arc<Dataset>,
    prior: Prior,
    start: f64,
    step: f64,
    match_tol: f64,
    draws: usize,
    seed: u64,
) -> Result<TunedAlpha, PosteriorError> {
    assert!(start >= 0.0 && step > 0.0, "tune_alpha: start >= 0 and step > 0");
    const MAX_INCREMENTS: usize = 20;
    const CHAINS: usize = 3;

    let d = model.dim(&data);
    let mut init_rng = crate::rng::substream(seed, crate::rng::Domain::Init, 0, 0);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for _ in 0..8 {
        if let Some(s) = prior.sample(&mut init_rng) {
            starts.push(s);
        }
    }
    starts.push(vec![0.0; d]);
    let erm = crate::optim::erm_multistart(
        model.as_ref(),
        &data,
        &starts,
        &crate::optim::OptimConfig::default(),
    )?;
    let erm_norm = erm.theta.iter().map(|v| v * v).sum::<f64>().sqrt();

    let n = data.n() as f64;
    let mut alpha = start;
    for increments in 0..=MAX_INCREMENTS {
        let spec = PosteriorSpec::petel(model.clone(), data.clone(), prior.clone(), alpha)?;
        let proposal = ProposalConfig::isotropic(
            crate::sampler::scale_proposal_default(data.n(), 2.0),
        );
        let mut pooled: Vec<Vec<f64>> = Vec::new();
        for c in 0..CHAINS {
            let mut rng =
                crate::rng::substream(seed, crate::rng::Domain::Init, increments as u64 + 1, c as u64);
            let mut init = None;
            for _ in 0..50 {
                let cand = match prior.sample(&mut rng) {
                    Some(v) => v,
                    None => break,
                };
                if spec.log_density(&cand, None).value > f64::NEG_INFINITY {
                    init = Some(cand);
                    break;
                }
            }
            let init = init.ok_or(PosteriorError::NoFeasibleInit)?;
            let chain = run_chain_indexed(
                &spec,
                &init,
                &proposal,
                draws,
                seed,
                increments as u64,
                c as u64,
            )?;
            let view = chain.post_burn_in();
            for row in view.rows() {
                pooled.push(row.to_vec());
            }
        }
        let mean: Vec<f64> = (0..d)
            .map(|j| pooled.iter().map(|r| r[j]).sum::<f64>() / pooled.len() as f64)
            .collect();
        let dist = mean
            .iter()
            .zip(&erm.theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist <= match_tol * (1.0 + erm_norm) {
            return Ok(TunedAlpha {
                alpha,
                exceeds_n: alpha > n,
                increments,
                erm: erm.theta,
                posterior_mean: mean,
            });
        }
        alpha += step;
    }
    Err(PosteriorError::NoAlphaFound { last_alpha: alpha - step, increments: MAX_INCREMENTS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::squared_loss;
    use ndarray::array;
    use rand::Rng;

    fn location_spec(values: Vec<f64>, mode: PosteriorMode, alpha: f64) -> PosteriorSpec {
        let data = Arc::new(Dataset::location(Array1::from_vec(values)).unwrap());
        let prior = Prior::centered_box(50.0, 1);
        match mode {
            PosteriorMode::Petel => {
                PosteriorSpec::petel(Arc::new(squared_loss()), data, prior, alpha).unwrap()
            }
            PosteriorMode::Etel => {
                PosteriorSpec::etel(Arc::new(squared_loss()), data, prior).unwrap()
            }
            PosteriorMode::Gibbs => {
                PosteriorSpec::gibbs(Arc::new(squared_loss()), data, prior, alpha).unwrap()
            }
        }
    }

    #[test]
    fn petel_with_zero_alpha_equals_etel() {
        let values: Vec<f64> = vec![0.3, -0.8, 1.4, 0.2, -0.1, 0.9];
        let petel = location_spec(values.clone(), PosteriorMode::Petel, 0.0);
        let etel = location_spec(values, PosteriorMode::Etel, 0.0);
        let mut rng = crate::rng::substream(41, crate::rng::Domain::Init, 0, 0);
        for _ in 0..50 {
            let theta = [rng.gen_range(-0.5..0.5)];
            let a = petel.log_density(&theta, None);
            let b = etel.log_density(&theta, None);
            assert!((a.value - b.value).abs() <= 1e-12);
        }
    }

    #[test]
    fn petel_additivity_in_the_penalty() {
        let values: Vec<f64> = vec![0.3, -0.8, 1.4, 0.2, -0.1, 0.9];
        let alpha = 7.5;
        let petel = location_spec(values.clone(), PosteriorMode::Petel, alpha);
        let etel = location_spec(values.clone(), PosteriorMode::Etel, 0.0);
        let data = Dataset::location(Array1::from_vec(values)).unwrap();
        let mut rng = crate::rng::substream(43, crate::rng::Domain::Init, 0, 0);
        for _ in 0..25 {
            let theta = [rng.gen_range(-0.5..0.5)];
            let risk = empirical_risk(&squared_loss(), &data, &theta).unwrap();
            let a = petel.log_density(&theta, None).value;
            let b = etel.log_density(&theta, None).value;
            assert!((a - (b - alpha * risk)).abs() <= 1e-12);
        }
    }

    #[test]
    fn gibbs_density_differences_are_risk_differences() {
        let values: Vec<f64> = vec![1.0, 2.0, 0.5, 1.5];
        let rate = 4.0 * 1.0; // n * beta with beta = 1
        let spec = location_spec(values.clone(), PosteriorMode::Gibbs, rate);
        let data = Dataset::location(Array1::from_vec(values)).unwrap();
        let r1 = empirical_risk(&squared_loss(), &data, &[0.7]).unwrap();
        let r2 = empirical_risk(&squared_loss(), &data, &[1.3]).unwrap();
        let d1 = spec.log_density(&[0.7], None).value;
        let d2 = spec.log_density(&[1.3], None).value;
        assert!(((d1 - d2) - (-rate * (r1 - r2))).abs() < 1e-12);
    }

    #[test]
    fn erm_evaluation_closed_form() {
        let values = array![0.4, -1.2, 2.2, 0.1, -0.6];
        let n = values.len() as f64;
        let mean = values.sum() / n;
        let alpha = 3.0;
        let spec = location_spec(values.to_vec(), PosteriorMode::Petel, alpha);
        let data = Dataset::location(values).unwrap();
        let risk = empirical_risk(&squared_loss(), &data, &[mean]).unwrap();
        let eval = spec.log_density(&[mean], None);
        let expected = spec.prior().log_density(&[mean]) - n * n.ln() - alpha * risk;
        assert!((eval.value - expected).abs() < 1e-10);
    }

    #[test]
    fn off_support_is_minus_infinity() {
        let spec = location_spec(vec![0.0, 1.0], PosteriorMode::Petel, 1.0);
        let eval = spec.log_density(&[100.0], None);
        assert_eq!(eval.value, f64::NEG_INFINITY);
        assert!(!eval.solver_failed);
    }

    #[test]
    fn solver_failure_is_flagged_not_fatal() {
        // all observations above theta: the moment rows share a sign
        let spec = location_spec(vec![1.0, 2.0, 3.0], PosteriorMode::Etel, 0.0);
        let eval = spec.log_density(&[-10.0], None);
        assert_eq!(eval.value, f64::NEG_INFINITY);
        assert!(eval.solver_failed);
    }

    #[test]
    fn default_alpha_examples() {
        assert!((default_alpha(500, 2.0, 0.5) - 44.721_359_549_995_79).abs() < 1e-9);
        assert!((default_alpha(500, 0.5, 0.25) - 0.5 * 500f64.powf(0.25)).abs() < 1e-12);
        assert_eq!(default_alpha(1, 2.0, 0.5), 2.0);
    }

    #[test]
    fn gaussian_prior_log_density() {
        let prior = Prior::gaussian(vec![1.0, -1.0], array![[2.0, 0.3], [0.3, 1.0]]).unwrap();
        // compare against the explicit 2x2 quadratic form
        let theta = [0.4, 0.2];
        let det: f64 = 2.0 * 1.0 - 0.09;
        let inv = array![[1.0 / det, -0.3 / det], [-0.3 / det, 2.0 / det]];
        let diff = array![theta[0] - 1.0, theta[1] + 1.0];
        let quad = diff.dot(&inv.dot(&diff));
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad;
        assert!((prior.log_density(&theta) - expected).abs() < 1e-12);
        assert!(Prior::gaussian(vec![0.0], array![[-1.0]]).is_err());
    }
}
