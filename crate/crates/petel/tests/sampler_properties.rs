//! Chain-level properties: stationarity of the kernel on an enumerable
//! target, invariance of accept decisions under density shifts, and the
//! tuned acceptance band on the classification posterior.

use ndarray::Array1;
use petel::bench::GeneratorSpec;
use petel::data::Dataset;
use petel::loss::smoothed_hinge_svm;
use petel::posterior::{default_alpha, Prior, PosteriorSpec};
use petel::rng::{substream, Domain};
use petel::sampler::{mh_kernel, run_chain, scale_proposal_default, ProposalConfig};
use rand::Rng;
use std::sync::Arc;

#[test]
fn five_state_kernel_reaches_its_stationary_distribution() {
    // discrete target on {0..4}; proposal flips to a uniformly random
    // other state, which is symmetric
    let weights = [0.30f64, 0.10, 0.25, 0.05, 0.30];
    let mut rng = substream(71, Domain::Chain, 0, 0);
    let mut state = 0usize;
    let mut counts = [0u64; 5];
    let steps = 1_000_000;
    for _ in 0..steps {
        let step = mh_kernel(
            state,
            weights[state].ln(),
            |cur, r: &mut rand_chacha::ChaCha12Rng| {
                let mut cand = r.gen_range(0..4usize);
                if cand >= *cur {
                    cand += 1;
                }
                (cand, 0.0, 0.0)
            },
            |s| weights[*s].ln(),
            &mut rng,
        );
        state = step.state;
        counts[state] += 1;
    }
    for k in 0..5 {
        let freq = counts[k] as f64 / steps as f64;
        assert!(
            (freq - weights[k]).abs() < 1e-2,
            "state {k}: frequency {freq} vs target {}",
            weights[k]
        );
    }
}

#[test]
fn accept_decisions_are_invariant_to_density_shifts() {
    // two posteriors whose log-densities differ by a constant must walk
    // the same path under the same seed
    let mut rng = substream(73, Domain::Data, 0, 0);
    let values = Array1::from_shape_fn(300, |_| rng.gen_range(-1.0..1.0));
    let data = Arc::new(Dataset::location(values).unwrap());
    let model = Arc::new(petel::loss::squared_loss());

    let base = PosteriorSpec::gibbs(
        model.clone(),
        data.clone(),
        Prior::centered_box(20.0, 1),
        300.0,
    )
    .unwrap();
    let shifted = PosteriorSpec::gibbs(
        model,
        data,
        Prior::custom(Arc::new(|theta: &[f64]| {
            if theta[0].abs() <= 20.0 {
                123.456
            } else {
                f64::NEG_INFINITY
            }
        })),
        300.0,
    )
    .unwrap();

    let proposal = ProposalConfig::isotropic(0.1);
    let a = run_chain(&base, &[0.0], &proposal, 1500, 9).unwrap();
    let b = run_chain(&shifted, &[0.0], &proposal, 1500, 9).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.accepted, b.accepted);
}

#[test]
fn classification_posterior_acceptance_band_after_adaptation() {
    let n = 500;
    let data = Arc::new(GeneratorSpec::svm(n).generate(75, 0));
    let model = Arc::new(smoothed_hinge_svm(0.1, 0.5));
    let alpha = default_alpha(n, 2.0, 0.5);
    let spec =
        PosteriorSpec::petel(model.clone(), data.clone(), Prior::centered_box(50.0, 2), alpha)
            .unwrap();
    let erm = petel::optim::subgradient_descent(
        model.as_ref(),
        &data,
        &[0.0, 0.0],
        &petel::optim::OptimConfig::default(),
    )
    .unwrap();
    let proposal = ProposalConfig::isotropic(scale_proposal_default(n, 2.0));
    for seed in [1u64, 2, 3] {
        let chain = run_chain(&spec, &erm.theta, &proposal, 3000, seed).unwrap();
        let rate = chain.post_burn_acceptance();
        assert!((0.15..=0.35).contains(&rate), "seed {seed}: acceptance {rate}");
    }
}
