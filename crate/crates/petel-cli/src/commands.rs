//! Subcommand implementations. Every command is a pure function of the
//! resolved configuration and its input files: outputs are byte-identical
//! across reruns with the same seed.

use crate::config::{CliError, ExperimentConfig, MethodName};
use petel::baselines::{calibrated_gibbs, BootstrapConfig};
use petel::bench::{
    population_minimizer, run_coverage, BootstrapMethod, CalibratedGibbsMethod, CoverageMethod,
    GeneratorSpec, McmcMethod, McmcMode, WarmPhase,
};
use petel::data::Dataset;
use petel::inference::{diagnostic_report, DiagnosticReport};
use petel::loss::{check_loss, LossModel};
use petel::optim::{subgradient_descent, InitRule};
use petel::posterior::PosteriorSpec;
use petel::rng::{substream, Domain};
use petel::sampler::{run_chain_indexed, scale_proposal_default, Chain, ProposalConfig};
use petel::sparse::{
    constrained_erm, run_sparse_chain_indexed, stepwise_search, SparseChainConfig, SparsePrior,
};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::sync::Arc;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn pretty(value: &serde_json::Value) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("json output");
    out.push('\n');
    out
}

fn require_loss(cfg: &ExperimentConfig) -> Result<Arc<dyn LossModel>, CliError> {
    cfg.loss
        .as_ref()
        .ok_or_else(|| CliError::Config("missing loss section".into()))?
        .build()
}

fn require_data(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    cfg.data
        .as_ref()
        .ok_or_else(|| CliError::Config("missing data section".into()))?
        .load(cfg.seed)
}

fn require_generator(cfg: &ExperimentConfig) -> Result<GeneratorSpec, CliError> {
    cfg.data
        .as_ref()
        .and_then(|d| d.generator.as_ref())
        .ok_or_else(|| CliError::Config("this command needs data.generator".into()))?
        .build()
}

fn chain_init(
    cfg: &ExperimentConfig,
    model: &Arc<dyn LossModel>,
    data: &Dataset,
) -> Result<Vec<f64>, CliError> {
    let d = model.dim(data);
    let rule = match &cfg.init {
        Some(ic) => ic.rule(d)?,
        None => None,
    };
    match rule {
        None => {
            let erm = subgradient_descent(model.as_ref(), data, &vec![0.0; d], &cfg.optimizer())
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            Ok(erm.theta)
        }
        Some(rule) => {
            let mut rng = substream(cfg.seed, Domain::Init, 0, 0);
            Ok(rule.draw(d, &mut rng))
        }
    }
}

/// `sample`: run MCMC chains for the configured method and write chain
/// CSV/JSON plus a diagnostics report.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let method = cfg.method.ok_or_else(|| CliError::Config("missing method".into()))?;
    let model: Arc<dyn LossModel> = match method {
        MethodName::Ald => {
            let tau = cfg.loss.as_ref().map(|l| l.tau()).unwrap_or(0.5);
            Arc::new(check_loss(tau))
        }
        _ => require_loss(cfg)?,
    };
    let data = Arc::new(require_data(cfg)?);
    let d = model.dim(&data);
    let n = data.n();
    let prior = cfg.prior.build(d)?;

    let spec = match method {
        MethodName::Petel => {
            let alpha = cfg
                .alpha
                .as_ref()
                .map(|a| a.resolve(n))
                .unwrap_or_else(|| petel::posterior::default_alpha(n, 2.0, 0.5));
            PosteriorSpec::petel(model.clone(), data.clone(), prior.clone(), alpha)?
        }
        MethodName::Etel => PosteriorSpec::etel(model.clone(), data.clone(), prior.clone())?,
        MethodName::Gibbs => {
            let beta = cfg.beta.unwrap_or(1.0);
            PosteriorSpec::gibbs(model.clone(), data.clone(), prior.clone(), n as f64 * beta)?
        }
        MethodName::Ald => {
            PosteriorSpec::gibbs(model.clone(), data.clone(), prior.clone(), n as f64)?
        }
        MethodName::Cg => {
            let res =
                calibrated_gibbs(model.clone(), data.clone(), prior.clone(), &cfg.cg_config(), cfg.seed)?;
            PosteriorSpec::gibbs(model.clone(), data.clone(), prior.clone(), n as f64 * res.beta)?
        }
        MethodName::Bootstrap | MethodName::All => {
            return Err(CliError::Config("sample expects a single MCMC method".into()));
        }
    };

    let proposal = ProposalConfig::isotropic(scale_proposal_default(n, cfg.proposal_c));
    let mut init = chain_init(cfg, &model, &data)?;
    if let Some(warm) = &cfg.warm {
        let warm_spec = spec.with_alpha(warm.alpha.resolve(n));
        let chain =
            run_chain_indexed(&warm_spec, &init, &proposal, warm.iters, cfg.seed, 0, 1000)?;
        let t = chain.iters();
        let tail = warm.tail.min(t);
        let view = chain.draws.slice(ndarray::s![t - tail.., ..]);
        init = (0..d).map(|j| view.column(j).sum() / tail as f64).collect();
    }

    let prefix = cfg.prefix.clone().unwrap_or_else(|| "sample".into());
    let mut chains: Vec<Chain> = Vec::with_capacity(cfg.chains);
    for c in 0..cfg.chains {
        chains.push(run_chain_indexed(&spec, &init, &proposal, cfg.iters, cfg.seed, 0, c as u64)?);
    }

    let echo = cfg.echo();
    let mut written = Vec::new();
    for (c, chain) in chains.iter().enumerate() {
        written.push(write_file(
            &cfg.output_dir,
            &format!("{prefix}_chain_{}.csv", c + 1),
            &chain.to_csv_string(),
        )?);
        let chain_value: serde_json::Value =
            serde_json::from_str(&chain.to_json_string()).expect("chain json");
        written.push(write_file(
            &cfg.output_dir,
            &format!("{prefix}_chain_{}.json", c + 1),
            &pretty(&json!({ "config": echo, "chain": chain_value })),
        )?);
    }

    let refs: Vec<&Chain> = chains.iter().collect();
    let report = diagnostic_report(&refs, 10).map_err(|e| CliError::Numeric(e.to_string()))?;
    let report_value = serde_json::to_value(&report).expect("report json");
    written.push(write_file(
        &cfg.output_dir,
        &format!("{prefix}_diagnostics.json"),
        &pretty(&json!({ "config": echo, "diagnostics": report_value })),
    )?);
    Ok(written)
}

type NamedMethod = (Box<dyn CoverageMethod>, Option<f64>);

fn coverage_methods(
    cfg: &ExperimentConfig,
    model: &Arc<dyn LossModel>,
    n: usize,
    d: usize,
) -> Result<Vec<NamedMethod>, CliError> {
    let method = cfg.method.ok_or_else(|| CliError::Config("missing method".into()))?;
    let alpha = cfg
        .alpha
        .as_ref()
        .map(|a| a.resolve(n))
        .unwrap_or_else(|| petel::posterior::default_alpha(n, 2.0, 0.5));
    let init = match &cfg.init {
        Some(ic) => ic.rule(d)?,
        None => None,
    };
    let warm = cfg.warm.as_ref().map(|w| WarmPhase {
        alpha: w.alpha.resolve(n),
        iters: w.iters,
        tail: w.tail,
    });
    let mcmc = |mode: McmcMode| -> Box<dyn CoverageMethod> {
        Box::new(McmcMethod {
            model: model.clone(),
            mode,
            prior_halfwidth: cfg.prior.halfwidth.unwrap_or(50.0),
            iters: cfg.iters,
            level: cfg.level,
            proposal_c: cfg.proposal_c,
            burn_in: cfg.burn_in,
            init: init.clone(),
            warm: warm.clone(),
            optimizer: cfg.optimizer(),
        })
    };
    let boot = || -> Box<dyn CoverageMethod> {
        let b = cfg.bootstrap.clone().unwrap_or_default();
        Box::new(BootstrapMethod {
            model: model.clone(),
            config: BootstrapConfig {
                b: b.b,
                level: cfg.level,
                optimizer: cfg.optimizer(),
                init: InitRule::Zero,
            },
        })
    };
    let cg = || -> Box<dyn CoverageMethod> {
        Box::new(CalibratedGibbsMethod {
            model: model.clone(),
            config: cfg.cg_config(),
            prior_halfwidth: cfg.prior.halfwidth.unwrap_or(50.0),
        })
    };
    let ald = || -> Box<dyn CoverageMethod> {
        let tau = cfg.loss.as_ref().map(|l| l.tau()).unwrap_or(0.5);
        Box::new(McmcMethod {
            model: Arc::new(check_loss(tau)),
            mode: McmcMode::Ald,
            prior_halfwidth: cfg.prior.halfwidth.unwrap_or(50.0),
            iters: cfg.iters,
            level: cfg.level,
            proposal_c: cfg.proposal_c,
            burn_in: cfg.burn_in,
            init: init.clone(),
            warm: None,
            optimizer: cfg.optimizer(),
        })
    };

    Ok(match method {
        MethodName::Petel => vec![(mcmc(McmcMode::Petel { alpha }), Some(alpha))],
        MethodName::Etel => vec![(mcmc(McmcMode::Etel), None)],
        MethodName::Gibbs => {
            vec![(mcmc(McmcMode::Gibbs { beta: cfg.beta.unwrap_or(1.0) }), None)]
        }
        MethodName::Ald => vec![(ald(), None)],
        MethodName::Bootstrap => vec![(boot(), None)],
        MethodName::Cg => vec![(cg(), None)],
        MethodName::All => {
            let mut v: Vec<NamedMethod> = vec![
                (mcmc(McmcMode::Petel { alpha }), Some(alpha)),
                (mcmc(McmcMode::Etel), None),
                (mcmc(McmcMode::Gibbs { beta: cfg.beta.unwrap_or(1.0) }), None),
                (boot(), None),
                (cg(), None),
            ];
            if cfg.loss.as_ref().map(|l| l.name == "check").unwrap_or(false) {
                v.push((ald(), None));
            }
            v
        }
    })
}

/// `coverage`: replicated frequentist-coverage experiment for one method
/// (or all of them) against the generator's population minimizer.
pub fn cmd_coverage(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = require_loss(cfg)?;
    let generator = require_generator(cfg)?;
    let theta_star = match generator.theta_star() {
        Some(t) => t,
        None => population_minimizer(model.as_ref(), &generator, cfg.oracle_n, cfg.seed)?,
    };
    let methods = coverage_methods(cfg, &model, generator.n, theta_star.len())?;
    let multiple = methods.len() > 1;
    let prefix = cfg.prefix.clone().unwrap_or_else(|| "coverage".into());
    let echo = cfg.echo();

    let mut written = Vec::new();
    for (method, alpha_echo) in methods {
        let report = run_coverage(
            method.as_ref(),
            &generator,
            &theta_star,
            cfg.replicates,
            cfg.level,
            cfg.seed,
            alpha_echo,
        )?;
        let stem = if multiple {
            format!("{prefix}_coverage_{}", sanitize(&report.method))
        } else {
            format!("{prefix}_coverage")
        };
        let report_value = serde_json::to_value(&report).expect("report json");
        written.push(write_file(
            &cfg.output_dir,
            &format!("{stem}.json"),
            &pretty(&json!({ "config": echo, "report": report_value })),
        )?);
        written.push(write_file(&cfg.output_dir, &format!("{stem}.csv"), &report.to_csv_string())?);
    }
    Ok(written)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

/// `sparse`: stepwise model search plus the model-averaged independence
/// sampler; writes the sparse chain CSV and a selection report.
pub fn cmd_sparse(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let model = require_loss(cfg)?;
    let data = require_data(cfg)?;
    let d = data.p();
    let n = data.n();
    let section = cfg
        .sparse
        .as_ref()
        .ok_or_else(|| CliError::Config("missing sparse section".into()))?;
    if section.s0 == 0 || section.s0 > d {
        return Err(CliError::Config("sparse.s0 must be in 1..=d".into()));
    }
    let beta = section
        .beta
        .as_ref()
        .map(|b| b.resolve(d))
        .unwrap_or_else(|| 1.2 * (d as f64).ln());
    let mut prior = SparsePrior::new(section.s0, beta);
    prior.include_empty = section.include_empty;
    let alpha = cfg
        .alpha
        .as_ref()
        .map(|a| a.resolve(n))
        .unwrap_or_else(|| petel::posterior::default_alpha(n, 2.0, 0.5));

    let erm_cfg = petel::optim::OptimConfig {
        iterations: section.erm_iters,
        ..Default::default()
    };
    let s_tilde = stepwise_search(model.as_ref(), &data, &prior, alpha, &[], &erm_cfg)?;
    let chain_cfg = SparseChainConfig {
        hamming_radius: section.hamming_radius,
        iters: cfg.iters,
        erm: erm_cfg.clone(),
        smoothing_eps: section.smoothing_eps,
    };
    let chain = run_sparse_chain_indexed(
        model.as_ref(),
        &data,
        &prior,
        alpha,
        &s_tilde,
        &chain_cfg,
        cfg.seed,
        0,
    )?;

    let selected_erm = constrained_erm(model.as_ref(), &data, &s_tilde, &erm_cfg)?;
    let probs: Vec<serde_json::Value> = chain
        .posterior_model_probs()
        .into_iter()
        .map(|(s, p)| json!({ "support": s, "probability": p }))
        .collect();

    let prefix = cfg.prefix.clone().unwrap_or_else(|| "sparse".into());
    let echo = cfg.echo();
    let mut written = Vec::new();
    written.push(write_file(
        &cfg.output_dir,
        &format!("{prefix}_sparse_chain.csv"),
        &chain.to_csv_string(),
    )?);
    let companion: serde_json::Value =
        serde_json::from_str(&chain.to_json_string()).expect("sparse json");
    written.push(write_file(
        &cfg.output_dir,
        &format!("{prefix}_sparse.json"),
        &pretty(&json!({
            "config": echo,
            "selection": {
                "stepwise_model": s_tilde,
                "constrained_erm": selected_erm.theta,
                "alpha": alpha,
                "beta": beta,
                "posterior_model_probabilities": probs,
            },
            "chain": companion,
        })),
    )?);
    Ok(written)
}

/// `diagnose`: convergence diagnostics over previously written chain
/// CSV files (split-half when a single file is given).
pub fn cmd_diagnose(
    files: &[PathBuf],
    output_dir: &Path,
    prefix: Option<&str>,
) -> Result<Vec<PathBuf>, CliError> {
    if files.is_empty() {
        return Err(CliError::Config("diagnose needs at least one chain csv".into()));
    }
    let mut chains = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(f)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", f.display())))?;
        chains.push(Chain::from_csv_str(&text).map_err(|e| CliError::Data(e.to_string()))?);
    }
    let iters = chains[0].iters();
    if chains.iter().any(|c| c.iters() != iters) {
        return Err(CliError::Config("chain files have mismatched lengths".into()));
    }
    let refs: Vec<&Chain> = chains.iter().collect();
    let report: DiagnosticReport =
        diagnostic_report(&refs, 10).map_err(|e| CliError::Config(e.to_string()))?;
    let prefix = prefix.unwrap_or("diagnose");
    let report_value = serde_json::to_value(&report).expect("report json");
    let inputs: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
    let path = write_file(
        output_dir,
        &format!("{prefix}_diagnostics.json"),
        &pretty(&json!({ "config": { "inputs": inputs }, "diagnostics": report_value })),
    )?;
    Ok(vec![path])
}

/// `gen`: emit a generator dataset as CSV (plus a config echo sibling).
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let generator = require_generator(cfg)?;
    let data = generator.generate(cfg.seed, 0);
    let prefix = cfg.prefix.clone().unwrap_or_else(|| "gen".into());
    let mut written = Vec::new();
    written.push(write_file(&cfg.output_dir, &format!("{prefix}_data.csv"), &data.to_csv_string())?);
    written.push(write_file(
        &cfg.output_dir,
        &format!("{prefix}_gen.json"),
        &pretty(&json!({ "config": cfg.echo(), "rows": data.n(), "columns": data.p() })),
    )?);
    Ok(written)
}
