use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::StateEnsemble;
use crate::error::{Error, Result};
use crate::rng::{role, RngStream};
use crate::ssm::ObservationModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SirConfig {
    pub resampling: Resampling,
}

/// Softmax of log-weights via log-sum-exp. Fails when no entry is finite.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.iter().any(|v| v.is_nan()) {
        return Err(Error::Argument("log-weights contain NaN".into()));
    }
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Degeneracy);
    }
    if max == f64::INFINITY {
        return Err(Error::Argument("log-weights contain +inf".into()));
    }
    let mut w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// `1 / sum w_i^2` of the normalized weights.
pub fn effective_sample_size(log_weights: &[f64]) -> Result<f64> {
    let w = normalize_log_weights(log_weights)?;
    Ok(1.0 / w.iter().map(|v| v * v).sum::<f64>())
}

/// `n` i.i.d. draws from the categorical distribution `weights`.
pub fn multinomial_resample(weights: &[f64], n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    let last = weights.len() - 1;
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(last)
        })
        .collect()
}

/// Weights members by `log p(y_hat | x_i)` and resamples `N` of them.
pub fn sir_update(
    prior: &StateEnsemble,
    obs_model: &dyn ObservationModel,
    y_hat: &[f64],
    config: &SirConfig,
    rng: &RngStream,
) -> Result<StateEnsemble> {
    let Resampling::Multinomial = config.resampling;
    let log_weights = prior
        .members
        .rows()
        .map(|x| {
            obs_model.log_likelihood(y_hat, x).ok_or_else(|| {
                Error::Capability("SIR requires an observation model with log_likelihood".into())
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let weights = normalize_log_weights(&log_weights)?;
    let indices =
        multinomial_resample(&weights, prior.len(), &mut rng.derive(role::RESAMPLE).rng());
    StateEnsemble::new(prior.members.select(&indices), prior.step)
}
