//! Command-line front end for the penalized tilted-likelihood inference
//! library: sampling, coverage benchmarking, sparse model averaging,
//! chain diagnostics, and dataset generation.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::{CliError, ExperimentConfig, MethodName};
use std::path::PathBuf;

const CONFIG_KEYS: &str = "CONFIG KEYS (JSON object; unknown keys are rejected):
  method            petel | etel | gibbs | cg | bootstrap | ald | all
  loss              {name, lambda?, epsilon?, tau?, delta?}
                    name: squared | check | hinge | smoothed_hinge |
                          huber_sigmoid | cubic
  data              {generator: {kind, n, d?, noise_as_variance?}} or {csv: path}
                    kind: svm_centroids | sigmoid_cauchy | hd_quantile |
                          cubic_regression
  prior             {kind: uniform_box, halfwidth? | lo?, hi?} or
                    {kind: gaussian, mean?, sd?}         (default box ±50)
  alpha             number, or {c, exponent?}: c * n^exponent (default 2 sqrt(n))
  beta              Gibbs learning rate; density rate is n*beta (default 1)
  level             credible/confidence level (default 0.95)
  iters             MCMC iterations per chain (default 3000)
  burn_in           summary burn-in; defaults to the adaptation span
  chains            chains for `sample` (default 1)
  replicates        replicates for `coverage` (default 200)
  seed              64-bit RNG seed (default 0)
  proposal_c        random-walk scale is proposal_c / sqrt(n) (default 2)
  workers           worker threads (default: logical cores)
  output_dir        output directory (default .)
  prefix            output filename prefix (default: subcommand name)
  oracle_n          Monte-Carlo size for population minimizers (default 1e6)
  init              {kind: erm | zero | point | normal, value?, mean?, sd?}
  warm              {alpha, iters?, tail?}: high-penalty warm phase
  sparse            {s0, beta?, hamming_radius?, erm_iters?, include_empty?,
                     smoothing_eps?}; beta: number or {c}: c * log(d)
  bootstrap         {b?, opt_iters?, step_c?}
  cg                {beta0?, sa_iters?, boot_b?, chain_iters?}

EXIT CODES: 1 = configuration error, 2 = data/IO error, 3 = numeric failure.";

#[derive(Parser)]
#[command(
    name = "petel",
    about = "Likelihood-free Bayesian inference for risk-minimization parameters",
    after_long_help = CONFIG_KEYS,
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOverrides {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override config.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override config.iters.
    #[arg(long)]
    iters: Option<usize>,
    /// Override config.replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Override config.chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Override config.level.
    #[arg(long)]
    level: Option<f64>,
    /// Override config.method.
    #[arg(long)]
    method: Option<String>,
    /// Override config.workers (worker-pool size).
    #[arg(long)]
    workers: Option<usize>,
    /// Override config.output_dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override config.prefix.
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run MCMC chains and write chain CSV/JSON plus diagnostics
    /// (methods: petel, etel, gibbs, cg, ald).
    #[command(after_long_help = CONFIG_KEYS)]
    Sample {
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Replicated coverage experiment against the population minimizer
    /// (methods: petel, etel, gibbs, cg, bootstrap, ald, all).
    #[command(after_long_help = CONFIG_KEYS)]
    Coverage {
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Stepwise model search plus the model-averaged sparse sampler.
    #[command(after_long_help = CONFIG_KEYS)]
    Sparse {
        #[command(flatten)]
        common: CommonOverrides,
    },
    /// Convergence diagnostics for previously written chain CSV files.
    Diagnose {
        /// Chain CSV files (equal lengths; one file uses split halves).
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
        #[arg(long)]
        prefix: Option<String>,
    },
    /// Emit a generator dataset as CSV.
    #[command(after_long_help = CONFIG_KEYS)]
    Gen {
        #[command(flatten)]
        common: CommonOverrides,
    },
}

fn load_config(common: &CommonOverrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => serde_json::from_str("{}").expect("empty config"),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(i) = common.iters {
        cfg.iters = i;
    }
    if let Some(r) = common.replicates {
        cfg.replicates = r;
    }
    if let Some(c) = common.chains {
        cfg.chains = c;
    }
    if let Some(l) = common.level {
        if !(l > 0.0 && l < 1.0) {
            return Err(CliError::Config("level must be in (0,1)".into()));
        }
        cfg.level = l;
    }
    if let Some(m) = &common.method {
        cfg.method = Some(m.parse::<MethodName>().map_err(CliError::Config)?);
    }
    if let Some(w) = common.workers {
        cfg.workers = Some(w);
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(p) = &common.prefix {
        cfg.prefix = Some(p.clone());
    }
    Ok(cfg)
}

fn configure_workers(workers: Option<usize>) -> Result<(), CliError> {
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Config("workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run() -> Result<Vec<PathBuf>, CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Sample { common } => {
            let cfg = load_config(&common)?;
            configure_workers(cfg.workers)?;
            commands::cmd_sample(&cfg)
        }
        Command::Coverage { common } => {
            let cfg = load_config(&common)?;
            configure_workers(cfg.workers)?;
            commands::cmd_coverage(&cfg)
        }
        Command::Sparse { common } => {
            let cfg = load_config(&common)?;
            configure_workers(cfg.workers)?;
            commands::cmd_sparse(&cfg)
        }
        Command::Diagnose { files, output_dir, prefix } => {
            commands::cmd_diagnose(&files, &output_dir, prefix.as_deref())
        }
        Command::Gen { common } => {
            let cfg = load_config(&common)?;
            commands::cmd_gen(&cfg)
        }
    }
}

fn main() {
    match run() {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
