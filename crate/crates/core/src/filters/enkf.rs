use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::StateEnsemble;
use crate::error::{ensure_dim, Error, Result};
use crate::rng::{role, RngStream};
use crate::ssm::{synthesize_observations, ObservationModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnkfConfig {
    /// Ridge added to the innovation covariance, relative to its mean diagonal.
    pub jitter: f64,
}

impl Default for EnkfConfig {
    fn default() -> Self {
        Self { jitter: 1e-8 }
    }
}

/// Perturbed-observation ensemble Kalman update.
///
/// Each member is paired with a sampled observation `y_i`; the gain is
/// `K = C_xy (C_yy + ridge I)^-1` from the empirical (1/(N-1)) covariances and
/// members move by `K (y_hat - y_i)`.
pub fn enkf_update(
    prior: &StateEnsemble,
    obs_model: &dyn ObservationModel,
    y_hat: &[f64],
    config: &EnkfConfig,
    rng: &RngStream,
) -> Result<StateEnsemble> {
    let n = prior.len();
    if n < 2 {
        return Err(Error::Argument(format!("EnKF needs N >= 2, got {n}")));
    }
    if !(config.jitter >= 0.0) {
        return Err(Error::Config(format!(
            "jitter must be >= 0, got {}",
            config.jitter
        )));
    }
    let paired = synthesize_observations(obs_model, prior, &rng.derive(role::SYNTHETIC))?;
    let d = prior.dim();
    let obs_d = paired.observations.dim();
    ensure_dim(obs_d, y_hat.len())?;

    let x_mean = paired.states.mean();
    let y_mean = paired.observations.mean();
    // Anomaly matrices, one column per member.
    let xa = DMatrix::from_fn(d, n, |a, i| paired.states.row(i)[a] - x_mean[a]);
    let ya = DMatrix::from_fn(obs_d, n, |a, i| paired.observations.row(i)[a] - y_mean[a]);
    let denom = (n - 1) as f64;
    let c_xy = &xa * ya.transpose() / denom;
    let mut c_yy = &ya * ya.transpose() / denom;
    let mean_diag = c_yy.trace() / obs_d as f64;
    let ridge = config.jitter * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    for a in 0..obs_d {
        c_yy[(a, a)] += ridge;
    }
    let chol = c_yy.cholesky().ok_or_else(|| {
        Error::LinearAlgebra(format!(
            "innovation covariance is not positive definite (jitter = {}); increase the EnKF jitter",
            config.jitter
        ))
    })?;
    let innovations = DMatrix::from_fn(obs_d, n, |a, i| y_hat[a] - paired.observations.row(i)[a]);
    let shifts = c_xy * chol.solve(&innovations);

    let mut members = paired.states;
    for (i, row) in members.rows_mut().enumerate() {
        for (a, v) in row.iter_mut().enumerate() {
            *v += shifts[(a, i)];
        }
    }
    StateEnsemble::new(members, prior.step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Ensemble;
    use crate::rng::gaussian_vector;
    use crate::ssm::{GaussianObservation, ObservationOperator};

    fn gaussian_prior(n: usize, d: usize, std: f64, seed: u64) -> StateEnsemble {
        let mut rng = RngStream::new(seed, 0).rng();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| gaussian_vector(&mut rng, d, std).unwrap())
            .collect();
        StateEnsemble::new(Ensemble::from_rows(&rows).unwrap(), 0).unwrap()
    }

    #[test]
    fn noiseless_identity_collapses_on_observation() {
        let prior = gaussian_prior(500, 2, 1.0, 1);
        let obs = GaussianObservation::new(ObservationOperator::Identity, 0.0).unwrap();
        let post = enkf_update(
            &prior,
            &obs,
            &[0.3, -0.7],
            &EnkfConfig { jitter: 0.0 },
            &RngStream::new(2, 0),
        )
        .unwrap();
        for r in post.members.rows() {
            assert!((r[0] - 0.3).abs() < 1e-9 && (r[1] + 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn scalar_gain_matches_kalman() {
        // P = 1, R = 0.5: K = 2/3, so the posterior mean is 2/3 * y_hat.
        let prior = gaussian_prior(10_000, 1, 1.0, 3);
        let obs = GaussianObservation::new(ObservationOperator::Identity, 0.5).unwrap();
        let p_mean = prior.members.mean()[0];
        let post = enkf_update(
            &prior,
            &obs,
            &[1.5],
            &EnkfConfig::default(),
            &RngStream::new(4, 0),
        )
        .unwrap();
        let empirical_gain = (post.members.mean()[0] - p_mean) / (1.5 - p_mean);
        assert!(
            (empirical_gain - 2.0 / 3.0).abs() < 0.02 * 2.0 / 3.0,
            "gain {empirical_gain}"
        );
    }

    #[test]
    fn centred_observation_leaves_mean() {
        let prior = gaussian_prior(20_000, 2, 1.0, 5);
        let obs =
            GaussianObservation::new(ObservationOperator::Component { index: 0 }, 0.25).unwrap();
        let y = [prior.members.mean()[0]];
        let post = enkf_update(
            &prior,
            &obs,
            &y,
            &EnkfConfig::default(),
            &RngStream::new(6, 0),
        )
        .unwrap();
        let (a, b) = (prior.members.mean(), post.members.mean());
        for k in 0..2 {
            assert!(
                (a[k] - b[k]).abs() < 3.0 * 0.5 / (20_000f64).sqrt() * 2.0,
                "{a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn singular_innovation_covariance_without_jitter() {
        let prior =
            StateEnsemble::new(Ensemble::from_rows(&[[1.0], [1.0], [1.0]]).unwrap(), 0).unwrap();
        let obs = GaussianObservation::new(ObservationOperator::Identity, 0.0).unwrap();
        let err = enkf_update(
            &prior,
            &obs,
            &[0.0],
            &EnkfConfig { jitter: 0.0 },
            &RngStream::new(0, 0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::LinearAlgebra(ref m) if m.contains("jitter")));
        let single = StateEnsemble::new(Ensemble::from_rows(&[[1.0]]).unwrap(), 0).unwrap();
        assert!(enkf_update(
            &single,
            &obs,
            &[0.0],
            &EnkfConfig::default(),
            &RngStream::new(0, 0)
        )
        .is_err());
    }
}
