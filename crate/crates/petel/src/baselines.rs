//! Comparator methods: bootstrap confidence intervals, the Gibbs
//! posterior, and the bootstrap-calibrated Gibbs posterior.
//!
//! Calibrated Gibbs follows the stochastic-approximation recipe: at the
//! current learning rate, run a Gibbs chain, threshold its log-densities
//! at the lower alpha-quantile to get a highest-density-style region,
//! estimate frequentist coverage by checking whether that region covers
//! bootstrap empirical risk minimizers, and move `log beta` toward the
//! nominal level. The bootstrap minimizers do not depend on the rate, so
//! they are computed once up front.

use crate::data::Dataset;
use crate::loss::{check_loss, empirical_risk, LossError, LossModel};
use crate::math::{quantile_of, quantile_type7};
use crate::optim::{subgradient_descent, InitRule, OptimConfig};
use crate::posterior::{PosteriorError, PosteriorSpec, Prior};
use crate::rng::{substream, Domain};
use crate::sampler::{run_chain_indexed, Chain, ProposalConfig, SamplerError};
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("bootstrap needs at least two resamples")]
    TooFewResamples,
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    /// Number of with-replacement resamples.
    pub b: usize,
    /// Interval level `1 - alpha`.
    pub level: f64,
    pub optimizer: OptimConfig,
    /// Initial-point rule for each resample's descent.
    pub init: InitRule,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { b: 500, level: 0.95, optimizer: OptimConfig::default(), init: InitRule::Zero }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapResult {
    /// B x d matrix of resample minimizers.
    pub estimates: Array2<f64>,
    /// Per-coordinate `(alpha/2, 1 - alpha/2)` quantile intervals. With
    /// very small `b` the type-7 quantiles interpolate between the extreme
    /// estimates, so `b = 2` effectively returns the min/max pair.
    pub intervals: Vec<(f64, f64)>,
    /// Mean of the resample minimizers.
    pub point: Vec<f64>,
    /// Resamples whose optimizer still had not converged at budget; their
    /// estimates are kept.
    pub non_converged: usize,
}

/// Bootstrap confidence intervals from resampled empirical risk
/// minimizers. Resamples run in parallel on disjoint RNG substreams.
pub fn bootstrap(
    model: &dyn LossModel,
    data: &Dataset,
    cfg: &BootstrapConfig,
    seed: u64,
) -> Result<BootstrapResult, BaselineError> {
    bootstrap_indexed(model, data, cfg, seed, 0)
}

/// As [`bootstrap`] but on the replicate's RNG substream.
pub fn bootstrap_indexed(
    model: &dyn LossModel,
    data: &Dataset,
    cfg: &BootstrapConfig,
    seed: u64,
    replicate: u64,
) -> Result<BootstrapResult, BaselineError> {
    if cfg.b < 2 {
        return Err(BaselineError::TooFewResamples);
    }
    model.validate(data)?;
    let d = model.dim(data);
    let n = data.n();

    let runs: Vec<Result<(Vec<f64>, bool), LossError>> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, Domain::Bootstrap, replicate, b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let resample = data.resample(&idx);
            let init = cfg.init.draw(d, &mut rng);
            let res = subgradient_descent(model, &resample, &init, &cfg.optimizer)?;
            Ok((res.theta, res.converged))
        })
        .collect();

    let mut estimates = Array2::<f64>::zeros((cfg.b, d));
    let mut non_converged = 0usize;
    for (b, run) in runs.into_iter().enumerate() {
        let (theta, converged) = run?;
        if !converged {
            non_converged += 1;
        }
        for j in 0..d {
            estimates[[b, j]] = theta[j];
        }
    }

    let alpha = 1.0 - cfg.level;
    let mut intervals = Vec::with_capacity(d);
    let mut point = Vec::with_capacity(d);
    for j in 0..d {
        let mut col: Vec<f64> = estimates.column(j).to_vec();
        col.sort_by(|a, b| a.partial_cmp(b).expect("NaN estimate"));
        intervals.push((quantile_type7(&col, alpha / 2.0), quantile_type7(&col, 1.0 - alpha / 2.0)));
        point.push(col.iter().sum::<f64>() / cfg.b as f64);
    }

    Ok(BootstrapResult { estimates, intervals, point, non_converged })
}

#[derive(Debug, Clone)]
pub struct CalibratedGibbsConfig {
    pub level: f64,
    /// Starting learning rate.
    pub beta0: f64,
    /// Stochastic-approximation steps.
    pub sa_iters: usize,
    /// Bootstrap minimizers used for the coverage estimate.
    pub boot_b: usize,
    /// Iterations of each inner Gibbs chain.
    pub chain_iters: usize,
    pub optimizer: OptimConfig,
    pub proposal_c: f64,
}

impl Default for CalibratedGibbsConfig {
    fn default() -> Self {
        Self {
            level: 0.95,
            beta0: 1.0,
            sa_iters: 30,
            boot_b: 200,
            chain_iters: 1500,
            optimizer: OptimConfig::default(),
            proposal_c: 2.0,
        }
    }
}

/// Result of the learning-rate calibration.
#[derive(Debug)]
pub struct CalibratedGibbs {
    /// Calibrated learning rate `beta` (the Gibbs rate is `n beta`).
    pub beta: f64,
    /// A fresh chain at the calibrated rate.
    pub chain: Chain,
    /// Coverage estimates along the SA trajectory.
    pub coverage_path: Vec<f64>,
}

/// Bootstrap-calibrated Gibbs posterior. The rate is clipped to
/// `[1e-4, 1e4]` as a divergence guard; the SA gain is `t^{-0.51}`.
pub fn calibrated_gibbs(
    model: Arc<dyn LossModel>,
    data: Arc<Dataset>,
    prior: Prior,
    cfg: &CalibratedGibbsConfig,
    seed: u64,
) -> Result<CalibratedGibbs, BaselineError> {
    calibrated_gibbs_indexed(model, data, prior, cfg, seed, 0)
}

/// As [`calibrated_gibbs`] but on the replicate's RNG substreams.
pub fn calibrated_gibbs_indexed(
    model: Arc<dyn LossModel>,
    data: Arc<Dataset>,
    prior: Prior,
    cfg: &CalibratedGibbsConfig,
    seed: u64,
    replicate: u64,
) -> Result<CalibratedGibbs, BaselineError> {
    const BETA_LO: f64 = 1e-4;
    const BETA_HI: f64 = 1e4;
    assert!(cfg.beta0 > 0.0, "beta0 must be positive");
    let n = data.n() as f64;
    let d = model.dim(&data);

    // ERM of the original data doubles as the chain start
    let mut init_rng = substream(seed, Domain::Calibrate, replicate, 0);
    let erm_init = InitRule::Zero.draw(d, &mut init_rng);
    let erm = subgradient_descent(model.as_ref(), &data, &erm_init, &cfg.optimizer)?;

    // bootstrap minimizers are rate-independent: solve once, cache the
    // pieces of their Gibbs log-density
    let boot = bootstrap_indexed(
        model.as_ref(),
        &data,
        &BootstrapConfig {
            b: cfg.boot_b,
            level: cfg.level,
            optimizer: cfg.optimizer.clone(),
            init: InitRule::Point(erm.theta.clone()),
        },
        seed,
        replicate,
    )?;
    let mut boot_terms = Vec::with_capacity(cfg.boot_b);
    for b in 0..cfg.boot_b {
        let theta: Vec<f64> = boot.estimates.row(b).to_vec();
        let lp = prior.log_density(&theta);
        let risk = empirical_risk(model.as_ref(), &data, &theta)?;
        boot_terms.push((lp, risk));
    }

    let alpha = 1.0 - cfg.level;
    let proposal =
        ProposalConfig::isotropic(crate::sampler::scale_proposal_default(data.n(), cfg.proposal_c));

    let mut log_beta = cfg.beta0.ln();
    let mut coverage_path = Vec::with_capacity(cfg.sa_iters);
    for t in 1..=cfg.sa_iters {
        let beta = log_beta.exp().clamp(BETA_LO, BETA_HI);
        let spec =
            PosteriorSpec::gibbs(model.clone(), data.clone(), prior.clone(), n * beta)?;
        let chain = run_chain_indexed(
            &spec,
            &erm.theta,
            &proposal,
            cfg.chain_iters,
            seed,
            replicate,
            t as u64,
        )?;
        let logd_tail = &chain.log_densities[chain.burn_in..];
        let threshold = quantile_of(logd_tail, alpha);
        let covered = boot_terms
            .iter()
            .filter(|(lp, risk)| lp - n * beta * risk >= threshold)
            .count();
        let coverage = covered as f64 / cfg.boot_b as f64;
        coverage_path.push(coverage);
        let gain = (t as f64).powf(-0.51);
        log_beta += gain * (coverage - cfg.level);
        log_beta = log_beta.clamp(BETA_LO.ln(), BETA_HI.ln());
    }

    let beta = log_beta.exp().clamp(BETA_LO, BETA_HI);
    let spec = PosteriorSpec::gibbs(model.clone(), data.clone(), prior, n * beta)?;
    let chain = run_chain_indexed(
        &spec,
        &erm.theta,
        &proposal,
        cfg.chain_iters,
        seed,
        replicate,
        cfg.sa_iters as u64 + 1,
    )?;
    Ok(CalibratedGibbs { beta, chain, coverage_path })
}

/// Gibbs posterior with check loss at unit working-likelihood scale
/// (rate `n`): the asymmetric-Laplace surrogate for quantile regression,
/// whose log-likelihood equals `-sum rho_tau` up to constants.
pub fn ald_gibbs_spec(
    data: Arc<Dataset>,
    prior: Prior,
    tau: f64,
) -> Result<PosteriorSpec, PosteriorError> {
    let n = data.n() as f64;
    PosteriorSpec::gibbs(Arc::new(check_loss(tau)), data, prior, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::summarize;
    use crate::loss::squared_loss;
    use ndarray::Array1;
    use rand_distr::StandardNormal;

    fn gaussian_location(n: usize, mu: f64, seed: u64) -> Dataset {
        let mut rng = substream(seed, Domain::Data, 0, 0);
        let values =
            Array1::from_shape_fn(n, |_| mu + rng.sample::<f64, _>(StandardNormal));
        Dataset::location(values).unwrap()
    }

    #[test]
    fn bootstrap_location_interval_matches_clt() {
        let data = gaussian_location(1000, 5.0, 71);
        let cfg = BootstrapConfig {
            b: 500,
            optimizer: OptimConfig { iterations: 600, ..Default::default() },
            ..Default::default()
        };
        let res = bootstrap(&squared_loss(), &data, &cfg, 7).unwrap();
        assert!((res.point[0] - 5.0).abs() < 0.15);
        let (lo, hi) = res.intervals[0];
        let expected = 2.0 * 1.96 / 1000.0f64.sqrt();
        assert!((hi - lo) > 0.7 * expected && (hi - lo) < 1.3 * expected, "length {}", hi - lo);
    }

    #[test]
    fn bootstrap_b2_degenerates_to_the_two_estimates() {
        let data = gaussian_location(50, 0.0, 73);
        let cfg = BootstrapConfig {
            b: 2,
            optimizer: OptimConfig { iterations: 300, ..Default::default() },
            ..Default::default()
        };
        let res = bootstrap(&squared_loss(), &data, &cfg, 11).unwrap();
        let a = res.estimates[[0, 0]];
        let b = res.estimates[[1, 0]];
        let (min, max) = (a.min(b), a.max(b));
        let (lo, hi) = res.intervals[0];
        assert!(lo >= min && hi <= max);
        // type-7 at b=2 interpolates 2.5% toward the interior
        assert!((lo - min).abs() <= 0.025 * (max - min) + 1e-12);
        assert!((hi - max).abs() <= 0.025 * (max - min) + 1e-12);
        assert!(bootstrap(&squared_loss(), &data, &BootstrapConfig { b: 1, ..cfg }, 1).is_err());
    }

    #[test]
    fn bootstrap_fixed_seed_is_deterministic() {
        let data = gaussian_location(200, 1.0, 75);
        let cfg = BootstrapConfig {
            b: 50,
            optimizer: OptimConfig { iterations: 200, ..Default::default() },
            ..Default::default()
        };
        let a = bootstrap(&squared_loss(), &data, &cfg, 42).unwrap();
        let b = bootstrap(&squared_loss(), &data, &cfg, 42).unwrap();
        assert_eq!(a.estimates, b.estimates);
        let c = bootstrap(&squared_loss(), &data, &cfg, 43).unwrap();
        assert_ne!(a.estimates, c.estimates);
    }

    #[test]
    fn gibbs_interval_length_decreases_in_beta() {
        let data = Arc::new(gaussian_location(400, 0.0, 77));
        let n = 400.0;
        let mut lengths = Vec::new();
        for (k, beta) in [0.5, 1.0, 2.0].into_iter().enumerate() {
            let spec = PosteriorSpec::gibbs(
                Arc::new(squared_loss()),
                data.clone(),
                Prior::centered_box(50.0, 1),
                n * beta,
            )
            .unwrap();
            let proposal = ProposalConfig::isotropic(crate::sampler::scale_proposal_default(400, 2.0));
            let chain =
                run_chain_indexed(&spec, &[0.0], &proposal, 8000, 19, 0, k as u64).unwrap();
            let s = summarize(chain.draws.view(), chain.burn_in, 0.95).unwrap();
            let (lo, hi) = s.per_coord_intervals[0];
            lengths.push(hi - lo);
        }
        assert!(lengths[0] > lengths[1] && lengths[1] > lengths[2], "{lengths:?}");
    }

    #[test]
    fn calibrated_gibbs_finds_unit_rate_for_conjugate_model() {
        // squared location loss on unit-variance data: Delta = H, so the
        // information equality holds at beta = 1
        let data = Arc::new(gaussian_location(500, 0.0, 79));
        let cfg = CalibratedGibbsConfig {
            sa_iters: 25,
            boot_b: 120,
            chain_iters: 1200,
            optimizer: OptimConfig { iterations: 400, ..Default::default() },
            ..Default::default()
        };
        let res = calibrated_gibbs(
            Arc::new(squared_loss()),
            data,
            Prior::centered_box(50.0, 1),
            &cfg,
            5,
        )
        .unwrap();
        assert!(res.beta > 0.5 && res.beta < 1.5, "beta {}", res.beta);
    }

    #[test]
    fn ald_spec_is_a_gibbs_posterior_with_rate_n() {
        let data = Arc::new(gaussian_location(100, 0.0, 81));
        let spec = ald_gibbs_spec(data.clone(), Prior::centered_box(10.0, 1), 0.5).unwrap();
        assert_eq!(spec.gibbs_rate(), Some(100.0));
        // density differences are exactly -n * risk differences
        let model = check_loss(0.5);
        let r1 = empirical_risk(&model, &data, &[0.2]).unwrap();
        let r2 = empirical_risk(&model, &data, &[-0.4]).unwrap();
        let d1 = spec.log_density(&[0.2], None).value;
        let d2 = spec.log_density(&[-0.4], None).value;
        assert!(((d1 - d2) + 100.0 * (r1 - r2)).abs() < 1e-12);
    }
}
