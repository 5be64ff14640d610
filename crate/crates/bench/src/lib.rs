//! Fixtures shared by the criterion benches.

use diffusim::rng::{gaussian_vector, RngStream};
use diffusim::ssm::{synthesize_observations, GaussianObservation, ObservationOperator};
use diffusim::{Ensemble, PairedEnsemble, StateEnsemble};

/// `n` standard normal members of dimension `d`, shifted by `offset`.
pub fn gaussian_ensemble(n: usize, d: usize, offset: f64, seed: u64) -> Ensemble {
    let mut rng = RngStream::new(seed, 0).rng();
    let data: Vec<f64> = gaussian_vector(&mut rng, n * d, 1.0)
        .expect("unit variance is valid")
        .into_iter()
        .map(|v| v + offset)
        .collect();
    Ensemble::from_vec(n, d, data).expect("sizes agree")
}

pub fn state_ensemble(n: usize, d: usize, seed: u64) -> StateEnsemble {
    StateEnsemble::new(gaussian_ensemble(n, d, 0.0, seed), 1).expect("non-empty")
}

/// Lorenz-96 style observation model: componentwise arctangent plus noise.
pub fn arctan_model() -> GaussianObservation {
    GaussianObservation::new(ObservationOperator::Arctan, 0.5).expect("positive variance")
}

pub fn paired_ensemble(n: usize, d: usize, seed: u64) -> PairedEnsemble {
    let prior = state_ensemble(n, d, seed);
    synthesize_observations(&arctan_model(), &prior, &RngStream::new(seed, 1))
        .expect("finite observations")
}
