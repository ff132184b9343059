//! Synthetic generators and the replicated coverage harness.
//!
//! Generators reproduce the simulation designs used throughout the test
//! suites: a two-centroid Gaussian classification problem, a sigmoid
//! regression with heteroscedastic Cauchy noise, a high-dimensional
//! quantile design, and a cubic regression whose empirical risk has
//! three stationary points.
//!
//! `run_coverage` replays a method over independently generated
//! replicates and aggregates per-coordinate coverage of the population
//! minimizer, interval lengths, and point-estimation error, with binomial
//! Monte-Carlo standard errors. Replicates run in parallel on disjoint
//! RNG substreams; aggregation is an ordered fold, so reports do not
//! depend on the worker count.

use crate::baselines::{
    bootstrap_indexed, calibrated_gibbs_indexed, BaselineError, BootstrapConfig,
    CalibratedGibbsConfig,
};
use crate::data::Dataset;
use crate::inference::summarize;
use crate::loss::{LossError, LossModel};
use crate::optim::{erm_multistart, subgradient_descent, InitRule, OptimConfig};
use crate::posterior::{PosteriorError, PosteriorSpec, Prior};
use crate::rng::{substream, Domain};
use crate::sampler::{run_chain_indexed, scale_proposal_default, ProposalConfig, SamplerError};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Inference(#[from] crate::inference::InferenceError),
    #[error("{failed} of {total} replicates failed (more than the 2% budget)")]
    TooManyFailures { failed: usize, total: usize },
    #[error("interval/point dimension mismatch against theta_star")]
    DimensionMismatch,
}

/// Reading of the second argument of the quantile design's noise law
/// `N(0, 0.5 sqrt((x1^2 + x2^2)/2))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseConvention {
    /// The expression is the standard deviation (default).
    StdDev,
    /// The expression is the variance.
    Variance,
}

/// Which synthetic design to draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeneratorKind {
    /// ±1 labels, features `N(c_y, I_2)` with centroids
    /// `c_+ = (0.64, 0.45)`, `c_- = (-1.18, -0.24)`.
    SvmCentroids,
    /// `y = 3 S(x1 + 2 x2) + e`, `e ~ Cauchy(0, ||x||_2 / sqrt(6))`.
    SigmoidCauchy,
    /// Quantile design: `(x1, x2) ~ N(0, diag(1, 2))`, the remaining
    /// `d - 2` columns standard normal, `theta* = (2, 3, 0, ...)`,
    /// heteroscedastic normal noise.
    HdQuantile { d: usize, noise: NoiseConvention },
    /// `y = f(theta* x) + e` with `f(t) = 0.1 t^3 - 0.2 t^2 - 0.2 t`,
    /// `theta* = 1`; the associated squared risk has three stationary
    /// points.
    CubicRegression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
}

pub const SVM_CENTROID_POS: [f64; 2] = [0.64, 0.45];
pub const SVM_CENTROID_NEG: [f64; 2] = [-1.18, -0.24];

impl GeneratorSpec {
    pub fn svm(n: usize) -> Self {
        Self { kind: GeneratorKind::SvmCentroids, n }
    }

    pub fn sigmoid_cauchy(n: usize) -> Self {
        Self { kind: GeneratorKind::SigmoidCauchy, n }
    }

    pub fn hd_quantile(n: usize, d: usize) -> Self {
        Self { kind: GeneratorKind::HdQuantile { d, noise: NoiseConvention::StdDev }, n }
    }

    pub fn cubic(n: usize) -> Self {
        Self { kind: GeneratorKind::CubicRegression, n }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            GeneratorKind::SvmCentroids => format!("svm_centroids(n={})", self.n),
            GeneratorKind::SigmoidCauchy => format!("sigmoid_cauchy(n={})", self.n),
            GeneratorKind::HdQuantile { d, .. } => format!("hd_quantile(n={}, d={d})", self.n),
            GeneratorKind::CubicRegression => format!("cubic_regression(n={})", self.n),
        }
    }

    /// The population risk minimizer when it is known in closed form.
    /// The SVM designs have no closed form; use [`population_minimizer`].
    pub fn theta_star(&self) -> Option<Vec<f64>> {
        match &self.kind {
            GeneratorKind::SvmCentroids => None,
            GeneratorKind::SigmoidCauchy => Some(vec![1.0, 2.0, 3.0]),
            GeneratorKind::HdQuantile { d, .. } => {
                let mut t = vec![0.0; *d];
                t[0] = 2.0;
                t[1] = 3.0;
                Some(t)
            }
            GeneratorKind::CubicRegression => Some(vec![1.0]),
        }
    }

    /// Draws the dataset for one replicate on its own RNG substream.
    pub fn generate(&self, seed: u64, replicate: u64) -> Dataset {
        let mut rng = substream(seed, Domain::Data, replicate, 0);
        let n = self.n;
        match &self.kind {
            GeneratorKind::SvmCentroids => {
                let mut x = Array2::<f64>::zeros((n, 2));
                let mut labels = Array1::<f64>::zeros(n);
                for i in 0..n {
                    let y: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let c = if y > 0.0 { SVM_CENTROID_POS } else { SVM_CENTROID_NEG };
                    x[[i, 0]] = c[0] + rng.sample::<f64, _>(StandardNormal);
                    x[[i, 1]] = c[1] + rng.sample::<f64, _>(StandardNormal);
                    labels[i] = y;
                }
                Dataset::classification(x, labels).expect("valid generated data")
            }
            GeneratorKind::SigmoidCauchy => {
                let mut x = Array2::<f64>::zeros((n, 2));
                let mut y = Array1::<f64>::zeros(n);
                for i in 0..n {
                    let x1: f64 = StandardNormal.sample(&mut rng);
                    let x2: f64 = StandardNormal.sample(&mut rng);
                    let scale = (x1 * x1 + x2 * x2).sqrt() / 6.0f64.sqrt();
                    let e = Cauchy::new(0.0, scale.max(1e-12))
                        .expect("positive scale")
                        .sample(&mut rng);
                    x[[i, 0]] = x1;
                    x[[i, 1]] = x2;
                    y[i] = 3.0 * crate::loss::sigmoid(x1 + 2.0 * x2) + e;
                }
                Dataset::regression(x, y).expect("valid generated data")
            }
            GeneratorKind::HdQuantile { d, noise } => {
                let d = *d;
                assert!(d >= 2, "hd_quantile needs d >= 2");
                let mut x = Array2::<f64>::zeros((n, d));
                let mut y = Array1::<f64>::zeros(n);
                for i in 0..n {
                    x[[i, 0]] = rng.sample::<f64, _>(StandardNormal);
                    x[[i, 1]] = 2.0f64.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    for j in 2..d {
                        x[[i, j]] = rng.sample::<f64, _>(StandardNormal);
                    }
                    let spread = 0.5 * ((x[[i, 0]].powi(2) + x[[i, 1]].powi(2)) / 2.0).sqrt();
                    let sd = match noise {
                        NoiseConvention::StdDev => spread,
                        NoiseConvention::Variance => spread.sqrt(),
                    };
                    let e = sd * rng.sample::<f64, _>(StandardNormal);
                    y[i] = 2.0 * x[[i, 0]] + 3.0 * x[[i, 1]] + e;
                }
                Dataset::regression(x, y).expect("valid generated data")
            }
            GeneratorKind::CubicRegression => {
                let mut x = Array2::<f64>::zeros((n, 1));
                let mut y = Array1::<f64>::zeros(n);
                for i in 0..n {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    let e: f64 = StandardNormal.sample(&mut rng);
                    x[[i, 0]] = xi;
                    y[i] = cubic_f(xi) + e;
                }
                Dataset::regression(x, y).expect("valid generated data")
            }
        }
    }
}

/// Convenience wrappers mirroring the generator kinds.
pub fn gen_svm(n: usize, seed: u64) -> Dataset {
    GeneratorSpec::svm(n).generate(seed, 0)
}

pub fn gen_sigmoid_cauchy(n: usize, seed: u64) -> Dataset {
    GeneratorSpec::sigmoid_cauchy(n).generate(seed, 0)
}

pub fn gen_hd_quantile(n: usize, d: usize, seed: u64) -> Dataset {
    GeneratorSpec::hd_quantile(n, d).generate(seed, 0)
}

pub fn gen_cubic_regression(n: usize, seed: u64) -> Dataset {
    GeneratorSpec::cubic(n).generate(seed, 0)
}

#[inline]
pub fn cubic_f(t: f64) -> f64 {
    0.1 * t * t * t - 0.2 * t * t - 0.2 * t
}

#[inline]
fn cubic_f_prime(t: f64) -> f64 {
    0.3 * t * t - 0.4 * t - 0.2
}

/// Squared loss on the cubic link `y = f(theta x)`: the one-dimensional
/// design whose empirical risk carries three stationary points.
#[derive(Debug, Clone, Copy)]
pub struct CubicRegressionLoss;

pub fn cubic_loss() -> CubicRegressionLoss {
    CubicRegressionLoss
}

impl LossModel for CubicRegressionLoss {
    fn dim(&self, _data: &Dataset) -> usize {
        1
    }

    fn name(&self) -> &'static str {
        "cubic_regression_loss"
    }

    fn validate(&self, data: &Dataset) -> Result<(), LossError> {
        if data.response().is_none() {
            return Err(LossError::MissingResponse { model: self.name() });
        }
        if data.p() != 1 {
            return Err(LossError::FeatureCount { model: self.name(), expected: 1, got: data.p() });
        }
        Ok(())
    }

    fn loss(&self, data: &Dataset, i: usize, theta: &[f64]) -> f64 {
        let x = data.feature_row(i)[0];
        let r = data.response().expect("validated")[i] - cubic_f(theta[0] * x);
        r * r
    }

    fn moment_into(&self, data: &Dataset, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = data.feature_row(i)[0];
        let r = data.response().expect("validated")[i] - cubic_f(theta[0] * x);
        out[0] = -2.0 * r * cubic_f_prime(theta[0] * x) * x;
    }
}

/// Population-risk minimizer by Monte Carlo: a large fresh sample from
/// the generator plus averaged subgradient descent. Used for the SVM
/// designs, whose minimizer has no closed form.
///
/// The Monte-Carlo sample draws from a seed derived on the oracle stream,
/// so it never overlaps replicate data generated under the same user seed.
pub fn population_minimizer(
    model: &dyn LossModel,
    generator: &GeneratorSpec,
    mc_n: usize,
    seed: u64,
) -> Result<Vec<f64>, BenchError> {
    let oracle_seed: u64 = substream(seed, Domain::Oracle, 0, 0).gen();
    let big = GeneratorSpec { kind: generator.kind.clone(), n: mc_n };
    let data = big.generate(oracle_seed, 0);
    let d = model.dim(&data);
    let cfg = OptimConfig { iterations: 1500, step_c: 0.5, averaging: true, bounds: None, tol: 1e-9 };
    let res = subgradient_descent(model, &data, &vec![0.0; d], &cfg)?;
    Ok(res.theta)
}

// ---------------------------------------------------------------------
// Coverage harness
// ---------------------------------------------------------------------

/// Point estimate plus per-coordinate intervals from one method run.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub point: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
}

/// Anything that can produce replicate datasets for the harness; the
/// production source is [`GeneratorSpec`], tests may plug in their own.
pub trait DataSource: Sync {
    fn name(&self) -> String;
    fn n(&self) -> usize;
    fn generate(&self, seed: u64, replicate: u64) -> Dataset;
}

impl DataSource for GeneratorSpec {
    fn name(&self) -> String {
        GeneratorSpec::name(self)
    }

    fn n(&self) -> usize {
        self.n
    }

    fn generate(&self, seed: u64, replicate: u64) -> Dataset {
        GeneratorSpec::generate(self, seed, replicate)
    }
}

/// A method the coverage harness can replay on generated datasets.
pub trait CoverageMethod: Sync {
    fn name(&self) -> String;
    fn run(&self, data: &Dataset, seed: u64, replicate: u64) -> Result<MethodOutcome, BenchError>;
}

/// Posterior-sampling methods (PETEL, plain tilted, Gibbs, the
/// asymmetric-Laplace surrogate) summarized by quantile intervals.
#[derive(Clone)]
pub struct McmcMethod {
    pub model: Arc<dyn LossModel>,
    pub mode: McmcMode,
    pub prior_halfwidth: f64,
    pub iters: usize,
    pub level: f64,
    pub proposal_c: f64,
    /// Summary burn-in; the chain's adaptation span when unset.
    pub burn_in: Option<usize>,
    /// Chain start: the replicate's empirical risk minimizer unless a
    /// rule is given.
    pub init: Option<InitRule>,
    /// Optional high-penalty warm phase: a short chain at `alpha_warm`,
    /// whose tail mean becomes the main chain's start.
    pub warm: Option<WarmPhase>,
    pub optimizer: OptimConfig,
}

#[derive(Debug, Clone)]
pub enum McmcMode {
    Petel { alpha: f64 },
    Etel,
    /// `rate = n * beta`.
    Gibbs { beta: f64 },
    /// Check-loss Gibbs at unit working-likelihood scale (rate `n`).
    Ald,
}

#[derive(Debug, Clone)]
pub struct WarmPhase {
    pub alpha: f64,
    pub iters: usize,
    /// Tail draws whose mean seeds the main chain.
    pub tail: usize,
}

impl McmcMethod {
    pub fn petel(model: Arc<dyn LossModel>, alpha: f64) -> Self {
        Self::with_mode(model, McmcMode::Petel { alpha })
    }

    pub fn etel(model: Arc<dyn LossModel>) -> Self {
        Self::with_mode(model, McmcMode::Etel)
    }

    fn with_mode(model: Arc<dyn LossModel>, mode: McmcMode) -> Self {
        Self {
            model,
            mode,
            prior_halfwidth: 50.0,
            iters: 3000,
            level: 0.95,
            proposal_c: 2.0,
            burn_in: None,
            init: None,
            warm: None,
            optimizer: OptimConfig::default(),
        }
    }

    fn spec(&self, data: Arc<Dataset>, prior: Prior) -> Result<PosteriorSpec, BenchError> {
        let n = data.n() as f64;
        Ok(match &self.mode {
            McmcMode::Petel { alpha } => {
                PosteriorSpec::petel(self.model.clone(), data, prior, *alpha)?
            }
            McmcMode::Etel => PosteriorSpec::etel(self.model.clone(), data, prior)?,
            McmcMode::Gibbs { beta } => {
                PosteriorSpec::gibbs(self.model.clone(), data, prior, n * beta)?
            }
            McmcMode::Ald => PosteriorSpec::gibbs(self.model.clone(), data, prior, n)?,
        })
    }
}

impl CoverageMethod for McmcMethod {
    fn name(&self) -> String {
        match &self.mode {
            McmcMode::Petel { alpha } => format!("petel(alpha={alpha:.4})"),
            McmcMode::Etel => "etel".into(),
            McmcMode::Gibbs { beta } => format!("gibbs(beta={beta})"),
            McmcMode::Ald => "ald".into(),
        }
    }

    fn run(&self, data: &Dataset, seed: u64, replicate: u64) -> Result<MethodOutcome, BenchError> {
        let data = Arc::new(data.clone());
        let d = self.model.dim(&data);
        let prior = Prior::centered_box(self.prior_halfwidth, d);
        let n = data.n();
        let proposal = ProposalConfig::isotropic(scale_proposal_default(n, self.proposal_c));

        let mut init = match &self.init {
            Some(rule) => {
                let mut rng = substream(seed, Domain::Init, replicate, 0);
                rule.draw(d, &mut rng)
            }
            None => {
                let erm =
                    subgradient_descent(self.model.as_ref(), &data, &vec![0.0; d], &self.optimizer)?;
                erm.theta
            }
        };

        if let Some(warm) = &self.warm {
            let spec = self.spec(data.clone(), prior.clone())?.with_alpha(warm.alpha);
            let chain =
                run_chain_indexed(&spec, &init, &proposal, warm.iters, seed, replicate, 1000)?;
            let t = chain.iters();
            let tail = warm.tail.min(t);
            let view = chain.draws.slice(ndarray::s![t - tail.., ..]);
            init = (0..d).map(|j| view.column(j).sum() / tail as f64).collect();
        }

        let spec = self.spec(data, prior)?;
        let chain = run_chain_indexed(&spec, &init, &proposal, self.iters, seed, replicate, 0)?;
        let burn = self.burn_in.unwrap_or(0).max(chain.burn_in);
        let summary = summarize(chain.draws.view(), burn, self.level)?;
        Ok(MethodOutcome { point: summary.mean.to_vec(), intervals: summary.per_coord_intervals })
    }
}

/// Bootstrap confidence intervals as a coverage method.
#[derive(Clone)]
pub struct BootstrapMethod {
    pub model: Arc<dyn LossModel>,
    pub config: BootstrapConfig,
}

impl CoverageMethod for BootstrapMethod {
    fn name(&self) -> String {
        format!("bootstrap(b={})", self.config.b)
    }

    fn run(&self, data: &Dataset, seed: u64, replicate: u64) -> Result<MethodOutcome, BenchError> {
        let res = bootstrap_indexed(self.model.as_ref(), data, &self.config, seed, replicate)?;
        Ok(MethodOutcome { point: res.point, intervals: res.intervals })
    }
}

/// Calibrated-Gibbs baseline as a coverage method; intervals are the
/// final chain's quantile intervals.
#[derive(Clone)]
pub struct CalibratedGibbsMethod {
    pub model: Arc<dyn LossModel>,
    pub config: CalibratedGibbsConfig,
    pub prior_halfwidth: f64,
}

impl CoverageMethod for CalibratedGibbsMethod {
    fn name(&self) -> String {
        "calibrated_gibbs".into()
    }

    fn run(&self, data: &Dataset, seed: u64, replicate: u64) -> Result<MethodOutcome, BenchError> {
        let d = self.model.dim(data);
        let prior = Prior::centered_box(self.prior_halfwidth, d);
        let res = calibrated_gibbs_indexed(
            self.model.clone(),
            Arc::new(data.clone()),
            prior,
            &self.config,
            seed,
            replicate,
        )?;
        let summary =
            summarize(res.chain.draws.view(), res.chain.burn_in, self.config.level)?;
        Ok(MethodOutcome { point: summary.mean.to_vec(), intervals: summary.per_coord_intervals })
    }
}

/// Per-coordinate aggregate of a coverage experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PerCoord {
    pub coverage_pct: f64,
    /// Binomial Monte-Carlo standard error of the coverage, in percent.
    pub mc_se: f64,
    pub mean_length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoverageReport {
    pub method: String,
    pub generator: String,
    pub n: usize,
    pub alpha: Option<f64>,
    pub level: f64,
    pub replicates: usize,
    pub per_coord: Vec<PerCoord>,
    /// Mean `||point - theta*||_2` over successful replicates.
    pub avg_error: f64,
    /// Replicates dropped because the method failed.
    pub excluded: usize,
    pub theta_star: Vec<f64>,
    pub seed: u64,
}

impl CoverageReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Flat CSV: one row per coordinate.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "method,generator,n,alpha,level,replicates,coord,coverage_pct,mc_se,mean_length,avg_error,excluded\n",
        );
        for (j, pc) in self.per_coord.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.method,
                self.generator,
                self.n,
                self.alpha.map_or(String::new(), |a| a.to_string()),
                self.level,
                self.replicates,
                j + 1,
                pc.coverage_pct,
                pc.mc_se,
                pc.mean_length,
                self.avg_error,
                self.excluded
            ));
        }
        out
    }
}

/// Replays `method` over generated replicates and aggregates coverage of
/// `theta_star`. Fails when more than 2% of replicates error out.
pub fn run_coverage(
    method: &dyn CoverageMethod,
    source: &dyn DataSource,
    theta_star: &[f64],
    replicates: usize,
    level: f64,
    seed: u64,
    alpha_echo: Option<f64>,
) -> Result<CoverageReport, BenchError> {
    assert!(replicates >= 1);
    let d = theta_star.len();

    let outcomes: Vec<Result<MethodOutcome, BenchError>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let data = source.generate(seed, r as u64);
            method.run(&data, seed, r as u64)
        })
        .collect();

    let mut hits = vec![0usize; d];
    let mut lengths = vec![0.0f64; d];
    let mut errors = Vec::new();
    let mut excluded = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                if o.intervals.len() != d || o.point.len() != d {
                    return Err(BenchError::DimensionMismatch);
                }
                for j in 0..d {
                    let (lo, hi) = o.intervals[j];
                    if theta_star[j] >= lo && theta_star[j] <= hi {
                        hits[j] += 1;
                    }
                    lengths[j] += hi - lo;
                }
                errors.push(
                    o.point
                        .iter()
                        .zip(theta_star)
                        .map(|(p, t)| (p - t) * (p - t))
                        .sum::<f64>()
                        .sqrt(),
                );
            }
            Err(_) => excluded += 1,
        }
    }
    let ok = replicates - excluded;
    if excluded * 50 > replicates {
        return Err(BenchError::TooManyFailures { failed: excluded, total: replicates });
    }
    let per_coord = (0..d)
        .map(|j| {
            let p = hits[j] as f64 / ok as f64;
            PerCoord {
                coverage_pct: 100.0 * p,
                mc_se: 100.0 * (p * (1.0 - p) / ok as f64).sqrt(),
                mean_length: lengths[j] / ok as f64,
            }
        })
        .collect();
    Ok(CoverageReport {
        method: method.name(),
        generator: source.name(),
        n: source.n(),
        alpha: alpha_echo,
        level,
        replicates,
        per_coord,
        avg_error: errors.iter().sum::<f64>() / ok as f64,
        excluded,
        theta_star: theta_star.to_vec(),
        seed,
    })
}

/// Empirical risk minimizer used by the harness: multistart subgradient
/// descent with prior-dispersed starts.
pub fn harness_erm(
    model: &dyn LossModel,
    data: &Dataset,
    halfwidth: f64,
    starts: usize,
    seed: u64,
    cfg: &OptimConfig,
) -> Result<Vec<f64>, BenchError> {
    let d = model.dim(data);
    let mut rng = substream(seed, Domain::Init, 0, 1);
    let mut inits = vec![vec![0.0; d]];
    for _ in 0..starts {
        inits.push((0..d).map(|_| rng.gen_range(-halfwidth..halfwidth)).collect());
    }
    Ok(erm_multistart(model, data, &inits, cfg)?.theta)
}
