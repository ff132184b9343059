//! JSON experiment configuration: schema, validation, and resolution to
//! library types. Unknown keys are rejected everywhere; flags override
//! config values, which override defaults.

use petel::baselines::CalibratedGibbsConfig;
use petel::bench::{GeneratorKind, GeneratorSpec, NoiseConvention};
use petel::data::Dataset;
use petel::loss::{
    check_loss, hinge_svm, huber_sigmoid, smoothed_hinge_svm, squared_loss, LossModel,
};
use petel::optim::{InitRule, OptimConfig};
use petel::posterior::Prior;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;

/// Top-level error with the process exit-code contract:
/// 1 = configuration, 2 = data/IO, 3 = numeric failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<petel::data::DataError> for CliError {
    fn from(e: petel::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<petel::posterior::PosteriorError> for CliError {
    fn from(e: petel::posterior::PosteriorError) -> Self {
        use petel::posterior::PosteriorError as PE;
        match e {
            PE::InvalidPrior(_) | PE::InvalidSpec(_) | PE::Loss(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<petel::sampler::SamplerError> for CliError {
    fn from(e: petel::sampler::SamplerError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<petel::bench::BenchError> for CliError {
    fn from(e: petel::bench::BenchError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<petel::sparse::SparseError> for CliError {
    fn from(e: petel::sparse::SparseError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<petel::baselines::BaselineError> for CliError {
    fn from(e: petel::baselines::BaselineError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Petel,
    Etel,
    Gibbs,
    Cg,
    Bootstrap,
    Ald,
    All,
}

impl std::str::FromStr for MethodName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "petel" => Ok(Self::Petel),
            "etel" => Ok(Self::Etel),
            "gibbs" => Ok(Self::Gibbs),
            "cg" => Ok(Self::Cg),
            "bootstrap" => Ok(Self::Bootstrap),
            "ald" => Ok(Self::Ald),
            "all" => Ok(Self::All),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

/// Penalty (or rate) setting: a literal value or a `c n^exponent` rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaConfig {
    Value(f64),
    Rule {
        c: f64,
        #[serde(default = "default_exponent")]
        exponent: f64,
    },
}

fn default_exponent() -> f64 {
    0.5
}

impl AlphaConfig {
    pub fn resolve(&self, n: usize) -> f64 {
        match self {
            AlphaConfig::Value(v) => *v,
            AlphaConfig::Rule { c, exponent } => petel::posterior::default_alpha(n, *c, *exponent),
        }
    }
}

/// Model-size rate: a literal value or `c log d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaConfig {
    Value(f64),
    Rule { c: f64 },
}

impl BetaConfig {
    pub fn resolve(&self, d: usize) -> f64 {
        match self {
            BetaConfig::Value(v) => *v,
            BetaConfig::Rule { c } => c * (d as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// squared | check | hinge | smoothed_hinge | huber_sigmoid | cubic
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl LossConfig {
    pub fn build(&self) -> Result<Arc<dyn LossModel>, CliError> {
        let pos = |v: Option<f64>, name: &str, default: f64| -> Result<f64, CliError> {
            let v = v.unwrap_or(default);
            if v > 0.0 {
                Ok(v)
            } else {
                Err(CliError::Config(format!("loss.{name} must be positive")))
            }
        };
        match self.name.as_str() {
            "squared" => Ok(Arc::new(squared_loss())),
            "check" => {
                let tau = self.tau.unwrap_or(0.5);
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(CliError::Config("loss.tau must be in (0,1)".into()));
                }
                Ok(Arc::new(check_loss(tau)))
            }
            "hinge" => Ok(Arc::new(hinge_svm(pos(self.lambda, "lambda", 0.1)?))),
            "smoothed_hinge" => Ok(Arc::new(smoothed_hinge_svm(
                pos(self.lambda, "lambda", 0.1)?,
                pos(self.epsilon, "epsilon", 0.5)?,
            ))),
            "huber_sigmoid" => Ok(Arc::new(huber_sigmoid(pos(self.delta, "delta", 2.0)?))),
            "cubic" => Ok(Arc::new(petel::bench::cubic_loss())),
            other => Err(CliError::Config(format!("unknown loss {other:?}"))),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(0.5)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// svm_centroids | sigmoid_cauchy | hd_quantile | cubic_regression
    pub kind: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Read the quantile design's noise expression as a variance instead
    /// of a standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_as_variance: Option<bool>,
}

impl GeneratorConfig {
    pub fn build(&self) -> Result<GeneratorSpec, CliError> {
        if self.n == 0 {
            return Err(CliError::Config("generator.n must be positive".into()));
        }
        let kind = match self.kind.as_str() {
            "svm_centroids" => GeneratorKind::SvmCentroids,
            "sigmoid_cauchy" => GeneratorKind::SigmoidCauchy,
            "hd_quantile" => {
                let d = self
                    .d
                    .ok_or_else(|| CliError::Config("hd_quantile needs generator.d".into()))?;
                if d < 2 {
                    return Err(CliError::Config("generator.d must be at least 2".into()));
                }
                let noise = if self.noise_as_variance.unwrap_or(false) {
                    NoiseConvention::Variance
                } else {
                    NoiseConvention::StdDev
                };
                GeneratorKind::HdQuantile { d, noise }
            }
            "cubic_regression" => GeneratorKind::CubicRegression,
            other => return Err(CliError::Config(format!("unknown generator {other:?}"))),
        };
        Ok(GeneratorSpec { kind, n: self.n })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl DataConfig {
    pub fn load(&self, seed: u64) -> Result<Dataset, CliError> {
        match (&self.generator, &self.csv) {
            (Some(g), None) => Ok(g.build()?.generate(seed, 0)),
            (None, Some(path)) => Ok(Dataset::from_csv_path(path)?),
            _ => Err(CliError::Config("data needs exactly one of generator/csv".into())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// uniform_box | gaussian
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

impl PriorConfig {
    pub fn build(&self, d: usize) -> Result<Prior, CliError> {
        match self.kind.as_str() {
            "uniform_box" => {
                if let (Some(lo), Some(hi)) = (&self.lo, &self.hi) {
                    return Prior::uniform_box(lo.clone(), hi.clone()).map_err(Into::into);
                }
                let hw = self.halfwidth.unwrap_or(50.0);
                if hw <= 0.0 {
                    return Err(CliError::Config("prior.halfwidth must be positive".into()));
                }
                Ok(Prior::centered_box(hw, d))
            }
            "gaussian" => {
                let mean = self.mean.clone().unwrap_or_else(|| vec![0.0; d]);
                if mean.len() != d {
                    return Err(CliError::Config(format!(
                        "prior.mean has length {}, parameter dimension is {d}",
                        mean.len()
                    )));
                }
                let sd = self.sd.unwrap_or(1.0);
                if sd <= 0.0 {
                    return Err(CliError::Config("prior.sd must be positive".into()));
                }
                let cov = ndarray::Array2::eye(d) * (sd * sd);
                Prior::gaussian(mean, cov).map_err(Into::into)
            }
            other => Err(CliError::Config(format!("unknown prior {other:?}"))),
        }
    }
}

fn default_prior() -> PriorConfig {
    PriorConfig { kind: "uniform_box".into(), halfwidth: None, lo: None, hi: None, mean: None, sd: None }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// erm | zero | point | normal
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

impl InitConfig {
    /// `None` means "start at the empirical risk minimizer".
    pub fn rule(&self, d: usize) -> Result<Option<InitRule>, CliError> {
        match self.kind.as_str() {
            "erm" => Ok(None),
            "zero" => Ok(Some(InitRule::Zero)),
            "point" => {
                let v = self
                    .value
                    .clone()
                    .ok_or_else(|| CliError::Config("init.point needs value".into()))?;
                if v.len() != d {
                    return Err(CliError::Config("init.value has the wrong dimension".into()));
                }
                Ok(Some(InitRule::Point(v)))
            }
            "normal" => {
                let mean = self.mean.clone().unwrap_or_else(|| vec![0.0; d]);
                if mean.len() != d {
                    return Err(CliError::Config("init.mean has the wrong dimension".into()));
                }
                let sd = self.sd.unwrap_or(1.0);
                if sd <= 0.0 {
                    return Err(CliError::Config("init.sd must be positive".into()));
                }
                Ok(Some(InitRule::Normal { mean, sd }))
            }
            other => Err(CliError::Config(format!("unknown init {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmConfig {
    pub alpha: AlphaConfig,
    #[serde(default = "default_warm_iters")]
    pub iters: usize,
    #[serde(default = "default_warm_tail")]
    pub tail: usize,
}

fn default_warm_iters() -> usize {
    500
}

fn default_warm_tail() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseConfig {
    pub s0: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaConfig>,
    #[serde(default = "default_hamming")]
    pub hamming_radius: usize,
    #[serde(default = "default_erm_iters")]
    pub erm_iters: usize,
    #[serde(default)]
    pub include_empty: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing_eps: Option<f64>,
}

fn default_hamming() -> usize {
    1
}

fn default_erm_iters() -> usize {
    1500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_boot_b")]
    pub b: usize,
    #[serde(default = "default_erm_iters")]
    pub opt_iters: usize,
    #[serde(default = "default_step_c")]
    pub step_c: f64,
}

fn default_boot_b() -> usize {
    500
}

fn default_step_c() -> f64 {
    0.5
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self { b: default_boot_b(), opt_iters: default_erm_iters(), step_c: default_step_c() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgSection {
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default = "default_sa_iters")]
    pub sa_iters: usize,
    #[serde(default = "default_cg_boot_b")]
    pub boot_b: usize,
    #[serde(default = "default_cg_chain_iters")]
    pub chain_iters: usize,
}

fn default_beta0() -> f64 {
    1.0
}

fn default_sa_iters() -> usize {
    30
}

fn default_cg_boot_b() -> usize {
    200
}

fn default_cg_chain_iters() -> usize {
    1500
}

impl Default for CgSection {
    fn default() -> Self {
        Self {
            beta0: default_beta0(),
            sa_iters: default_sa_iters(),
            boot_b: default_cg_boot_b(),
            chain_iters: default_cg_chain_iters(),
        }
    }
}

/// The experiment configuration shared by every subcommand; each
/// subcommand reads the sections it needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default = "default_prior")]
    pub prior: PriorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaConfig>,
    /// Gibbs learning rate `beta` (the density rate is `n beta`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_iters")]
    pub iters: usize,
    /// Summary burn-in; defaults to each chain's adaptation span.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_proposal_c")]
    pub proposal_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
    /// Monte-Carlo sample size for population-minimizer oracles.
    #[serde(default = "default_oracle_n")]
    pub oracle_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm: Option<WarmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse: Option<SparseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg: Option<CgSection>,
}

fn default_level() -> f64 {
    0.95
}

fn default_iters() -> usize {
    3000
}

fn default_chains() -> usize {
    1
}

fn default_replicates() -> usize {
    200
}

fn default_proposal_c() -> f64 {
    2.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_oracle_n() -> usize {
    1_000_000
}

impl ExperimentConfig {
    pub fn from_path(path: &PathBuf) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        // serde_json errors carry line/column positions
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn optimizer(&self) -> OptimConfig {
        let b = self.bootstrap.clone().unwrap_or_default();
        OptimConfig { iterations: b.opt_iters, step_c: b.step_c, ..Default::default() }
    }

    pub fn cg_config(&self) -> CalibratedGibbsConfig {
        let c = self.cg.clone().unwrap_or_default();
        let b = self.bootstrap.clone().unwrap_or_default();
        CalibratedGibbsConfig {
            level: self.level,
            beta0: c.beta0,
            sa_iters: c.sa_iters,
            boot_b: c.boot_b,
            chain_iters: c.chain_iters,
            optimizer: OptimConfig { iterations: b.opt_iters, step_c: b.step_c, ..Default::default() },
            proposal_c: self.proposal_c,
        }
    }

    /// The resolved config serialized for embedding into output files.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config echo")
    }
}
