//! Sampler interfaces for the process and observation models and the
//! ensemble-level operations built on them.
//!
//! Models are black boxes: the filters only ever call `sample`. Only the SIR
//! filter additionally needs [`ObservationModel::log_likelihood`].

use std::f64::consts::PI;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, PairedEnsemble, StateEnsemble};
use crate::error::{ensure_dim, Error, Result};
use crate::rng::{add_gaussian, RngStream};

/// Stochastic transition `x_k ~ p(. | x_{k-1})`.
pub trait ProcessModel: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, previous: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

/// Stochastic measurement `y ~ p(. | x)`.
pub trait ObservationModel: Send + Sync {
    /// Observation dimension for states of dimension `state_dim`.
    fn obs_dim(&self, state_dim: usize) -> Result<usize>;
    fn sample(&self, state: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
    /// `log p(y | x)`, when the model can evaluate it.
    fn log_likelihood(&self, _y: &[f64], _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Deterministic part of an additive-noise process model.
pub trait DeterministicMap: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityMap(pub usize);

impl DeterministicMap for IdentityMap {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
}

/// `x -> A x` with `A` square, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    dim: usize,
    matrix: Vec<f64>,
}

impl LinearMap {
    pub fn new(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        ensure_dim(dim * dim, matrix.len())?;
        Ok(Self { dim, matrix })
    }
}

impl DeterministicMap for LinearMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .matrix
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// `x_k = map(x_{k-1}) + eps`, `eps ~ N(0, noise_variance I)`. Noise is added
/// once per assimilation interval.
#[derive(Debug, Clone)]
pub struct AdditiveNoiseProcess<M> {
    pub map: M,
    noise_std: f64,
}

impl<M: DeterministicMap> AdditiveNoiseProcess<M> {
    pub fn new(map: M, noise_variance: f64) -> Result<Self> {
        Ok(Self {
            map,
            noise_std: checked_std(noise_variance)?,
        })
    }
}

impl<M: DeterministicMap> ProcessModel for AdditiveNoiseProcess<M> {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn sample(&self, previous: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mut x = self.map.apply(previous)?;
        add_gaussian(rng, &mut x, self.noise_std);
        Ok(x)
    }
}

fn checked_std(variance: f64) -> Result<f64> {
    if variance >= 0.0 && variance.is_finite() {
        Ok(variance.sqrt())
    } else {
        Err(Error::Argument(format!(
            "noise variance must be finite and >= 0, got {variance}"
        )))
    }
}

/// Noise-free observation operator `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationOperator {
    Identity,
    /// A single state coordinate (zero-based).
    Component {
        index: usize,
    },
    /// Componentwise arctangent.
    Arctan,
    /// `H x` with `H` of shape `rows x cols`, row-major.
    Linear {
        rows: usize,
        cols: usize,
        matrix: Vec<f64>,
    },
}

impl ObservationOperator {
    pub fn out_dim(&self, state_dim: usize) -> Result<usize> {
        match self {
            Self::Identity | Self::Arctan => Ok(state_dim),
            Self::Component { index } if *index < state_dim => Ok(1),
            Self::Component { index } => Err(Error::Argument(format!(
                "observed component {index} out of range for dim {state_dim}"
            ))),
            Self::Linear { rows, cols, matrix } => {
                ensure_dim(rows * cols, matrix.len())?;
                ensure_dim(*cols, state_dim)?;
                Ok(*rows)
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Identity => x.to_vec(),
            Self::Component { index } => vec![x[*index]],
            Self::Arctan => x.iter().map(|v| v.atan()).collect(),
            Self::Linear { cols, matrix, .. } => matrix
                .chunks_exact(*cols)
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
        }
    }
}

/// `y = h(x) + eta`, `eta ~ N(0, noise_variance I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianObservation {
    pub operator: ObservationOperator,
    noise_variance: f64,
    noise_std: f64,
}

impl GaussianObservation {
    pub fn new(operator: ObservationOperator, noise_variance: f64) -> Result<Self> {
        let noise_std = checked_std(noise_variance)?;
        Ok(Self {
            operator,
            noise_variance,
            noise_std,
        })
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }
}

impl ObservationModel for GaussianObservation {
    fn obs_dim(&self, state_dim: usize) -> Result<usize> {
        self.operator.out_dim(state_dim)
    }

    fn sample(&self, state: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let mut y = self.operator.apply(state);
        add_gaussian(rng, &mut y, self.noise_std);
        y
    }

    fn log_likelihood(&self, y: &[f64], x: &[f64]) -> Option<f64> {
        let h = self.operator.apply(x);
        let var = self.noise_variance;
        if var == 0.0 {
            return Some(if h.as_slice() == y {
                0.0
            } else {
                f64::NEG_INFINITY
            });
        }
        let sq: f64 = h.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        Some(-0.5 * y.len() as f64 * (2.0 * PI * var).ln() - sq / (2.0 * var))
    }
}

/// Pushes every member through the process model. Member `i` draws from
/// `rng.member(i)`, so results do not depend on thread scheduling.
pub fn propagate_ensemble(
    model: &dyn ProcessModel,
    ensemble: &StateEnsemble,
    rng: &RngStream,
) -> Result<StateEnsemble> {
    let d = model.dim();
    ensure_dim(d, ensemble.dim())?;
    let mut out = Ensemble::zeros(ensemble.len(), d);
    out.as_mut_slice()
        .par_chunks_exact_mut(d)
        .zip(ensemble.members.as_slice().par_chunks_exact(d))
        .enumerate()
        .try_for_each(|(i, (dst, src))| {
            let x = model
                .sample(src, &mut rng.member(i).rng())
                .map_err(|e| match e {
                    Error::BlowUp { .. } => Error::Propagation { member: i },
                    other => other,
                })?;
            ensure_dim(d, x.len())?;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Propagation { member: i });
            }
            dst.copy_from_slice(&x);
            Ok(())
        })?;
    Ok(StateEnsemble {
        members: out,
        step: ensemble.step + 1,
    })
}

/// Pairs each member with a synthetic observation drawn from `rng.member(i)`.
pub fn synthesize_observations(
    model: &dyn ObservationModel,
    ensemble: &StateEnsemble,
    rng: &RngStream,
) -> Result<PairedEnsemble> {
    let obs_dim = model.obs_dim(ensemble.dim())?;
    let mut obs = Ensemble::zeros(ensemble.len(), obs_dim);
    obs.as_mut_slice()
        .par_chunks_exact_mut(obs_dim)
        .zip(ensemble.members.as_slice().par_chunks_exact(ensemble.dim()))
        .enumerate()
        .try_for_each(|(i, (dst, x))| {
            let y = model.sample(x, &mut rng.member(i).rng());
            ensure_dim(obs_dim, y.len())?;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::Observation { member: i });
            }
            dst.copy_from_slice(&y);
            Ok(())
        })?;
    PairedEnsemble::new(ensemble.members.clone(), obs)
}
