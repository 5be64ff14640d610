use diffusim::experiment::{
    run_experiment, ExperimentConfig, FilterKind, MetricKind, ReferenceSet,
};
use diffusim::rng::{gaussian_vector, RngStream};
use diffusim::{
    diffusion_update, enkf_update, sir_update, wasserstein2, DiffusionConfig, EmpiricalMeasure,
    EnkfConfig, Ensemble, GaussianObservation, ObservationOperator, SirConfig, StateEnsemble,
};
use proptest::prelude::*;

fn gaussian_prior(n: usize, d: usize, seed: u64) -> StateEnsemble {
    let mut rng = RngStream::new(seed, 0).rng();
    let z = gaussian_vector(&mut rng, n * d, 1.0).unwrap();
    StateEnsemble::new(Ensemble::from_vec(n, d, z).unwrap(), 1).unwrap()
}

fn tiny_l63() -> ExperimentConfig {
    ExperimentConfig {
        steps: 4,
        ensemble_sizes: vec![20],
        sims: 2,
        ..ExperimentConfig::lorenz63()
    }
}

#[test]
fn all_filters_agree_on_a_vague_observation() {
    // With observation noise far above the prior spread every update is
    // close to the identity in distribution.
    let prior = gaussian_prior(4000, 2, 7);
    let model = GaussianObservation::new(ObservationOperator::Component { index: 0 }, 1e6).unwrap();
    let y = [3.0];
    let rng = RngStream::new(7, 1);
    let enkf = enkf_update(&prior, &model, &y, &EnkfConfig::default(), &rng).unwrap();
    let sir = sir_update(&prior, &model, &y, &SirConfig::default(), &rng).unwrap();
    let diff = diffusion_update(
        &prior,
        &model,
        &y,
        &DiffusionConfig::with_bandwidths(0.02, 0.05),
        &rng,
    )
    .unwrap();
    for post in [&enkf, &sir, &diff.posterior] {
        assert_eq!(post.members.len(), 4000);
        for m in post.members.mean() {
            assert!(m.abs() < 0.1, "mean {m}");
        }
    }
}

#[test]
fn informative_observation_pulls_every_filter_towards_it() {
    let prior = gaussian_prior(2000, 1, 8);
    let model = GaussianObservation::new(ObservationOperator::Identity, 0.01).unwrap();
    let y = [1.0];
    let rng = RngStream::new(8, 1);
    let expected = 1.0 / 1.01;
    let enkf = enkf_update(&prior, &model, &y, &EnkfConfig::default(), &rng).unwrap();
    let sir = sir_update(&prior, &model, &y, &SirConfig::default(), &rng).unwrap();
    let diff = diffusion_update(
        &prior,
        &model,
        &y,
        &DiffusionConfig::with_bandwidths(0.02, 0.02),
        &rng,
    )
    .unwrap();
    for (name, post) in [
        ("enkf", &enkf),
        ("sir", &sir),
        ("diffusion", &diff.posterior),
    ] {
        let m = post.members.mean()[0];
        assert!((m - expected).abs() < 0.1, "{name}: mean {m}");
    }
}

#[test]
fn stored_reference_scores_like_the_inline_one() {
    let config = ExperimentConfig {
        filters: vec![FilterKind::Diffusion],
        ..tiny_l63()
    };
    let reference = ReferenceSet::build(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    reference.save(dir.path()).unwrap();
    let loaded = ReferenceSet::load(dir.path()).unwrap();
    let inline = run_experiment(&config, None).unwrap();
    let stored = run_experiment(&config, Some(&loaded)).unwrap();
    assert_eq!(inline.summary, stored.summary);
    assert_eq!(inline.summary.metric, MetricKind::W2);
}

#[test]
fn experiment_is_reproducible_and_seed_sensitive() {
    let a = run_experiment(&tiny_l63(), None).unwrap();
    let b = run_experiment(&tiny_l63(), None).unwrap();
    let c = run_experiment(
        &ExperimentConfig {
            seed: 1,
            ..tiny_l63()
        },
        None,
    )
    .unwrap();
    assert_eq!(a.summary, b.summary);
    assert_ne!(a.summary, c.summary);
    assert!(a.all_completed());
    for cell in &a.summary.cells {
        assert_eq!(cell.completed, 2);
        assert!(cell.values.iter().all(|v| v.is_some_and(f64::is_finite)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn diffusion_update_preserves_shape_and_finiteness(
        n in 2usize..40,
        d in 1usize..4,
        seed in 0u64..1000,
        y in -2.0f64..2.0,
    ) {
        let prior = gaussian_prior(n, d, seed);
        let model = GaussianObservation::new(ObservationOperator::Component { index: d - 1 }, 0.5).unwrap();
        let out = diffusion_update(&prior, &model, &[y], &DiffusionConfig::default(), &RngStream::new(seed, 1)).unwrap();
        prop_assert_eq!(out.posterior.members.len(), n);
        prop_assert_eq!(out.posterior.members.dim(), d);
        prop_assert!(out.posterior.members.is_finite());
        prop_assert_eq!(out.steps.len(), n);
        prop_assert!(out.steps.iter().all(|&s| s >= 1));
    }

    #[test]
    fn w2_is_a_symmetric_premetric(
        n in 1usize..25,
        m in 1usize..25,
        seed in 0u64..1000,
    ) {
        let a = EmpiricalMeasure::from_ensemble(&gaussian_prior(n, 2, seed));
        let b = EmpiricalMeasure::from_ensemble(&gaussian_prior(m, 2, seed + 5000));
        let ab = wasserstein2(&a, &b).unwrap();
        let ba = wasserstein2(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
        prop_assert!(wasserstein2(&a, &a).unwrap() <= 1e-9);
    }

    #[test]
    fn w2_triangle_inequality(seed in 0u64..1000) {
        let a = EmpiricalMeasure::from_ensemble(&gaussian_prior(12, 2, seed));
        let b = EmpiricalMeasure::from_ensemble(&gaussian_prior(9, 2, seed + 1));
        let c = EmpiricalMeasure::from_ensemble(&gaussian_prior(15, 2, seed + 2));
        let ac = wasserstein2(&a, &c).unwrap();
        let ab = wasserstein2(&a, &b).unwrap();
        let bc = wasserstein2(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }
}
