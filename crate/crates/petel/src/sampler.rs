//! Random-walk Metropolis–Hastings with multiplier warm starts.
//!
//! One chain step proposes `theta' = theta + sigma L z` (isotropic or a
//! fixed SPD covariance factor `L`), evaluates the target with the
//! current state's tilting multiplier as the Newton warm start, and
//! accepts with the usual log-ratio test. The proposal scale adapts
//! toward a 0.234 acceptance rate by a Robbins–Monro recursion on
//! `log sigma` during an initial window, then freezes; the adaptation
//! span is reported as burn-in.
//!
//! The generic [`mh_kernel`] carries the Hastings correction for
//! asymmetric proposals and is reused by the sparse independence
//! sampler.

use crate::math::cholesky;
use crate::posterior::PosteriorSpec;
use crate::rng::{substream, Domain};
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("initial state is outside the prior support")]
    InitOffSupport,
    #[error("log-density at the initial state is not finite")]
    NonFiniteDensityAtInit,
    #[error("proposal covariance must be SPD")]
    BadProposalCovariance,
    #[error("chain csv: {0}")]
    ChainParse(String),
}

/// Proposal shape: `N(theta, sigma^2 Sigma)`.
#[derive(Debug, Clone)]
pub enum ProposalCovariance {
    Isotropic,
    Matrix(Array2<f64>),
}

#[derive(Debug, Clone)]
pub struct ProposalConfig {
    /// Initial scale `sigma`.
    pub base_sd: f64,
    pub covariance: ProposalCovariance,
    /// Acceptance-rate target for adaptation (0.234 unless overridden).
    pub target_accept: f64,
    /// Cap on the adaptation span; the effective span is
    /// `min(adapt_window, iters / 3)`.
    pub adapt_window: usize,
}

impl ProposalConfig {
    pub fn isotropic(base_sd: f64) -> Self {
        assert!(base_sd > 0.0, "base_sd must be positive");
        Self {
            base_sd,
            covariance: ProposalCovariance::Isotropic,
            target_accept: 0.234,
            adapt_window: 1000,
        }
    }

    pub fn with_matrix(mut self, sigma: Array2<f64>) -> Self {
        self.covariance = ProposalCovariance::Matrix(sigma);
        self
    }
}

/// Default random-walk scale `c n^{-1/2}`, matching the root-n width of
/// the target.
pub fn scale_proposal_default(n: usize, c: f64) -> f64 {
    assert!(n >= 1);
    c / (n as f64).sqrt()
}

/// A finished chain. Draws include the adaptation phase; `burn_in` marks
/// its length so summaries can drop it.
#[derive(Debug, Clone)]
pub struct Chain {
    pub draws: Array2<f64>,
    pub log_densities: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Final (frozen) proposal scale.
    pub proposal_sd: f64,
    /// Mean of `accepted` over the whole chain.
    pub acceptance_rate: f64,
    pub seed: u64,
    pub burn_in: usize,
}

impl Chain {
    pub fn iters(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn post_burn_in(&self) -> ArrayView2<'_, f64> {
        self.draws.slice(ndarray::s![self.burn_in.., ..])
    }

    /// Acceptance rate over the frozen (post-adaptation) phase.
    pub fn post_burn_acceptance(&self) -> f64 {
        let tail = &self.accepted[self.burn_in..];
        if tail.is_empty() {
            return f64::NAN;
        }
        tail.iter().filter(|a| **a).count() as f64 / tail.len() as f64
    }

    /// CSV with one row per draw: `iter,accepted,logd,theta_1..theta_d`.
    pub fn to_csv_string(&self) -> String {
        let d = self.dim();
        let mut out = String::new();
        out.push_str("iter,accepted,logd");
        for j in 1..=d {
            out.push_str(&format!(",theta_{j}"));
        }
        out.push('\n');
        for t in 0..self.iters() {
            out.push_str(&format!(
                "{},{},{}",
                t + 1,
                if self.accepted[t] { 1 } else { 0 },
                self.log_densities[t]
            ));
            for j in 0..d {
                out.push_str(&format!(",{}", self.draws[[t, j]]));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV emitted by [`Chain::to_csv_string`]. Metadata that
    /// the CSV does not carry (seed, scale, burn-in) is zeroed.
    pub fn from_csv_str(text: &str) -> Result<Self, SamplerError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| SamplerError::ChainParse("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 || cols[0] != "iter" || cols[1] != "accepted" || cols[2] != "logd" {
            return Err(SamplerError::ChainParse("unexpected header".into()));
        }
        let d = cols.len() - 3;
        let mut draws = Vec::new();
        let mut logd = Vec::new();
        let mut accepted = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(SamplerError::ChainParse(format!("row {} has wrong arity", ln + 2)));
            }
            accepted.push(fields[1] == "1");
            logd.push(
                fields[2]
                    .parse::<f64>()
                    .map_err(|e| SamplerError::ChainParse(format!("row {}: {e}", ln + 2)))?,
            );
            for f in &fields[3..] {
                draws.push(
                    f.parse::<f64>()
                        .map_err(|e| SamplerError::ChainParse(format!("row {}: {e}", ln + 2)))?,
                );
            }
        }
        let t = accepted.len();
        if t == 0 {
            return Err(SamplerError::ChainParse("no draws".into()));
        }
        let draws = Array2::from_shape_vec((t, d), draws)
            .map_err(|e| SamplerError::ChainParse(e.to_string()))?;
        let acceptance_rate = accepted.iter().filter(|a| **a).count() as f64 / t as f64;
        Ok(Chain {
            draws,
            log_densities: logd,
            accepted,
            proposal_sd: 0.0,
            acceptance_rate,
            seed: 0,
            burn_in: 0,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mirror = ChainJson {
            seed: self.seed,
            proposal_sd: self.proposal_sd,
            acceptance_rate: self.acceptance_rate,
            burn_in: self.burn_in,
            iters: self.iters(),
            dim: self.dim(),
            accepted: self.accepted.iter().map(|a| u8::from(*a)).collect(),
            log_densities: self.log_densities.clone(),
            draws: (0..self.iters()).map(|t| self.draws.row(t).to_vec()).collect(),
        };
        serde_json::to_string_pretty(&mirror).expect("chain serialization")
    }
}

#[derive(Serialize, Deserialize)]
struct ChainJson {
    seed: u64,
    proposal_sd: f64,
    acceptance_rate: f64,
    burn_in: usize,
    iters: usize,
    dim: usize,
    accepted: Vec<u8>,
    log_densities: Vec<f64>,
    draws: Vec<Vec<f64>>,
}

/// Outcome of one Metropolis–Hastings transition.
#[derive(Debug, Clone)]
pub struct MhStep<S> {
    pub state: S,
    pub log_density: f64,
    pub accepted: bool,
}

/// One MH transition with an explicit Hastings correction.
///
/// `propose` returns `(proposal, log q(proposal | current),
/// log q(current | proposal))`; `logd` evaluates the target. The move is
/// accepted when `ln u < (logd' - logd) + (log q_back - log q_fwd)`;
/// a uniform is consumed on every call so RNG streams stay aligned
/// across accept and reject paths.
pub fn mh_kernel<S, R: Rng>(
    current: S,
    current_logd: f64,
    propose: impl FnOnce(&S, &mut R) -> (S, f64, f64),
    logd: impl FnOnce(&S) -> f64,
    rng: &mut R,
) -> MhStep<S> {
    let (cand, log_q_fwd, log_q_back) = propose(&current, rng);
    let cand_logd = logd(&cand);
    let delta = (cand_logd - current_logd) + (log_q_back - log_q_fwd);
    let u: f64 = rng.gen();
    if u.ln() < delta {
        MhStep { state: cand, log_density: cand_logd, accepted: true }
    } else {
        MhStep { state: current, log_density: current_logd, accepted: false }
    }
}

/// Runs one random-walk chain; stream coordinates default to `(0, 0)`.
pub fn run_chain(
    spec: &PosteriorSpec,
    init: &[f64],
    proposal: &ProposalConfig,
    iters: usize,
    seed: u64,
) -> Result<Chain, SamplerError> {
    run_chain_indexed(spec, init, proposal, iters, seed, 0, 0)
}

/// Runs one chain on the RNG stream `(Domain::Chain, replicate, chain_index)`,
/// so replicated experiments and multi-chain runs stay disjoint.
pub fn run_chain_indexed(
    spec: &PosteriorSpec,
    init: &[f64],
    proposal: &ProposalConfig,
    iters: usize,
    seed: u64,
    replicate: u64,
    chain_index: u64,
) -> Result<Chain, SamplerError> {
    assert!(iters > 0, "run_chain: iters must be positive");
    let d = spec.dim();
    assert_eq!(init.len(), d, "init has wrong dimension");

    if !spec.prior().in_support(init) {
        return Err(SamplerError::InitOffSupport);
    }
    let eval = spec.log_density(init, None);
    if !eval.value.is_finite() {
        return Err(SamplerError::NonFiniteDensityAtInit);
    }

    let chol = match &proposal.covariance {
        ProposalCovariance::Isotropic => None,
        ProposalCovariance::Matrix(m) => {
            Some(cholesky(m).ok_or(SamplerError::BadProposalCovariance)?)
        }
    };

    let mut rng: ChaCha12Rng = substream(seed, Domain::Chain, replicate, chain_index);
    let span = proposal.adapt_window.min(iters / 3);

    let mut state = init.to_vec();
    let mut state_logd = eval.value;
    let mut warm: Option<Array1<f64>> = eval.etel.map(|s| s.lambda);
    let mut log_sigma = proposal.base_sd.ln();

    let mut draws = Array2::<f64>::zeros((iters, d));
    let mut log_densities = Vec::with_capacity(iters);
    let mut accepted_flags = Vec::with_capacity(iters);
    let mut accept_count = 0usize;
    let mut cand = vec![0.0; d];

    for t in 1..=iters {
        let sigma = log_sigma.exp();
        match &chol {
            None => {
                for (c, s) in cand.iter_mut().zip(&state) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *c = s + sigma * z;
                }
            }
            Some(l) => {
                let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                for i in 0..d {
                    let mut v = 0.0;
                    for j in 0..=i {
                        v += l[[i, j]] * z[j];
                    }
                    cand[i] = state[i] + sigma * v;
                }
            }
        }

        let cand_eval = spec.log_density(&cand, warm.as_ref());

        // spot check against a cold-started solve; the tolerance is loose
        // because log-density magnitudes scale with n and the row norms,
        // while true warm-start bookkeeping bugs would drift by O(1)
        #[cfg(debug_assertions)]
        if t % 100 == 0 && cand_eval.value.is_finite() {
            let cold = spec.log_density(&cand, None);
            let both_converged = match (&cand_eval.etel, &cold.etel) {
                (Some(a), Some(b)) => a.converged && b.converged,
                _ => true,
            };
            debug_assert!(
                !both_converged
                    || (cold.value - cand_eval.value).abs()
                        <= 1e-6 * (1.0 + cand_eval.value.abs()),
                "warm-start drift: {} vs {}",
                cand_eval.value,
                cold.value
            );
        }

        let delta = cand_eval.value - state_logd;
        let u: f64 = rng.gen();
        let accept = u.ln() < delta;
        if accept {
            state.copy_from_slice(&cand);
            state_logd = cand_eval.value;
            warm = cand_eval.etel.map(|s| s.lambda);
            accept_count += 1;
        }
        for j in 0..d {
            draws[[t - 1, j]] = state[j];
        }
        log_densities.push(state_logd);
        accepted_flags.push(accept);

        if t <= span {
            let gain = (t as f64).powf(-0.6);
            let indicator = if accept { 1.0 } else { 0.0 };
            log_sigma += gain * (indicator - proposal.target_accept);
        }
    }

    Ok(Chain {
        draws,
        log_densities,
        accepted: accepted_flags,
        proposal_sd: log_sigma.exp(),
        acceptance_rate: accept_count as f64 / iters as f64,
        seed,
        burn_in: span,
    })
}
