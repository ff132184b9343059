//! Likelihood-free Bayesian inference for parameters defined by risk
//! minimization.
//!
//! The central object is the penalized exponentially tilted empirical
//! likelihood (PETEL) posterior
//!
//! ```text
//! pi(theta | X) ∝ pi(theta) * exp(-alpha_n R_n(theta)) * prod_i p_i(theta)
//! ```
//!
//! where `R_n` is the empirical risk of a loss model, `p_i(theta)` are
//! exponentially tilted weights enforcing the moment condition
//! `sum_i w_i g(X_i, theta) = 0` with `g` the loss (sub)gradient, and the
//! penalty `alpha_n R_n` empties posterior mass at stationary points of
//! `R_n` other than the empirical risk minimizer. Setting `alpha_n = 0`
//! recovers the plain tilted-likelihood posterior; a Gibbs mode
//! `exp(-n beta R_n) pi(theta)` and bootstrap/calibration baselines are
//! provided for comparison.
//!
//! Module map:
//!
//! * [`data`] — observation tables and CSV ingestion
//! * [`loss`] — loss/moment models (squared, check, hinge, smoothed
//!   hinge, Huber-sigmoid)
//! * [`etel`] — the inner Newton solver for the tilting dual
//! * [`posterior`] — priors and unnormalized log-densities
//! * [`sampler`] — random-walk Metropolis with multiplier warm starts
//! * [`sparse`] — model-averaged posterior over sparse supports
//! * [`inference`] — summaries, credible regions, chain diagnostics
//! * [`baselines`] — bootstrap, Gibbs, and calibrated-Gibbs comparators
//! * [`bench`] — synthetic generators and the coverage harness
//! * [`testkit`] — brute-force oracles used only by test code

pub mod baselines;
pub mod bench;
pub mod data;
pub mod etel;
pub mod inference;
pub mod loss;
pub mod math;
pub mod optim;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod sparse;
pub mod testkit;
