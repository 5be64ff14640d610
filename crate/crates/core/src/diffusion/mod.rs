//! Training-free conditional diffusion update.
//!
//! One assimilation update runs in four stages:
//! 1. pair every forecast member with a synthetic observation,
//! 2. map states and observations into a centered `[-1, 1]` frame,
//! 3. transport fresh `N(0, sigma_max^2 I)` draws to the conditional
//!    distribution by integrating the reverse-time ODE whose drift is the
//!    closed-form score of the kernel density estimate,
//! 4. map the samples back to state coordinates.

mod normalize;
mod sampler;
mod score;

pub use normalize::{fit_normalizer, transform_observation, AffineNormalizer};
pub use sampler::{reverse_sample, ReverseSample};
pub use score::{sigma_schedule, ScoreField};

use serde::{Deserialize, Serialize};

use crate::ensemble::{PairedEnsemble, StateEnsemble};
use crate::error::{ensure_dim, Error, Result};
use crate::rng::{role, RngStream};
use crate::ssm::{synthesize_observations, ObservationModel};

/// How the reverse-time ODE is stepped across the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    /// One adaptive step size for the whole batch; error norm over all members.
    #[default]
    Shared,
    /// Every member integrated with its own controller.
    PerMember,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub sigma_max: f64,
    /// State-kernel bandwidth in the normalized frame.
    pub sigma_x: f64,
    /// Observation-kernel bandwidth in the normalized frame.
    pub sigma_y: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    pub max_steps: usize,
    pub controller: Controller,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            sigma_max: 5.0,
            sigma_x: 0.1,
            sigma_y: 0.25,
            ode_rtol: 1e-3,
            ode_atol: 1e-6,
            max_steps: 10_000,
            controller: Controller::Shared,
        }
    }
}

impl DiffusionConfig {
    pub fn with_bandwidths(sigma_x: f64, sigma_y: f64) -> Self {
        Self {
            sigma_x,
            sigma_y,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_max >= 1.0) || !self.sigma_max.is_finite() {
            return Err(Error::Config(format!(
                "sigma_max must be >= 1, got {}",
                self.sigma_max
            )));
        }
        for (name, v) in [("sigma_x", self.sigma_x), ("sigma_y", self.sigma_y)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.ode_rtol > 0.0) || !(self.ode_atol > 0.0) || self.max_steps == 0 {
            return Err(Error::Config(
                "ODE tolerances and max_steps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Posterior ensemble plus accepted solver steps per member.
#[derive(Debug, Clone)]
pub struct DiffusionUpdate {
    pub posterior: StateEnsemble,
    pub steps: Vec<usize>,
}

/// Full update step: synthesize, normalize, sample, de-normalize.
pub fn diffusion_update(
    prior: &StateEnsemble,
    obs_model: &dyn ObservationModel,
    y_hat: &[f64],
    config: &DiffusionConfig,
    rng: &RngStream,
) -> Result<DiffusionUpdate> {
    config.validate()?;
    let paired = synthesize_observations(obs_model, prior, &rng.derive(role::SYNTHETIC))?;
    update_from_pairs(
        &paired,
        y_hat,
        config,
        &rng.derive(role::SAMPLER),
        prior.step,
    )
}

/// Update from an existing paired ensemble; draws the ODE initial
/// conditions from `sampler_rng`.
pub fn update_from_pairs(
    paired: &PairedEnsemble,
    y_hat: &[f64],
    config: &DiffusionConfig,
    sampler_rng: &RngStream,
    step: usize,
) -> Result<DiffusionUpdate> {
    config.validate()?;
    ensure_dim(paired.observations.dim(), y_hat.len())?;
    let (nx, ny) = fit_normalizer(paired)?;
    let normalized =
        PairedEnsemble::new(nx.apply(&paired.states)?, ny.apply(&paired.observations)?)?;
    let y_norm = transform_observation(&ny, y_hat)?;
    let field = ScoreField::new(&normalized, &y_norm, config)?;
    let sample = reverse_sample(&field, paired.len(), sampler_rng)?;
    let members = nx.invert(&sample.samples)?;
    Ok(DiffusionUpdate {
        posterior: StateEnsemble::new(members, step)?,
        steps: sample.steps,
    })
}
