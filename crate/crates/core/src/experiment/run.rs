use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{FilterKind, Model};
use crate::diffusion::{diffusion_update, DiffusionConfig};
use crate::ensemble::{Ensemble, StateEnsemble};
use crate::error::{Error, Result};
use crate::filters::{enkf_update, sir_update, EnkfConfig, SirConfig};
use crate::metrics::{rmse, wasserstein2, EmpiricalMeasure};
use crate::rng::{add_gaussian, gaussian_vector, role, RngStream};
use crate::ssm::{propagate_ensemble, DeterministicMap, ObservationModel};

/// `x*_0 ~ N(0, I)` followed by `steps` noise-free applications of `map`.
/// Returns `steps + 1` states.
pub fn generate_truth(
    map: &dyn DeterministicMap,
    steps: usize,
    rng: &RngStream,
) -> Result<Vec<Vec<f64>>> {
    let mut x = gaussian_vector(&mut rng.rng(), map.dim(), 1.0)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    for k in 1..=steps {
        x = map.apply(&x).map_err(|e| match e {
            Error::BlowUp { .. } => Error::BlowUp { step: k },
            other => other,
        })?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { step: k });
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// `y_k = h(x*_k) + eta_k` for `k = 1..=K`; `truth[0]` is not observed.
pub fn realize_observations(
    truth: &[Vec<f64>],
    obs_model: &dyn ObservationModel,
    rng: &RngStream,
) -> Result<Vec<Vec<f64>>> {
    truth
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, x)| {
            let y = obs_model.sample(x, &mut rng.step(k).rng());
            if y.iter().all(|v| v.is_finite()) {
                Ok(y)
            } else {
                Err(Error::Argument(format!(
                    "non-finite observation at step {k}"
                )))
            }
        })
        .collect()
}

/// `x_0^(i) ~ N(truth0, I)`, member `i` drawn from `rng.member(i)`.
pub fn initialize_ensemble(truth0: &[f64], n: usize, rng: &RngStream) -> Result<StateEnsemble> {
    if n < 2 {
        return Err(Error::Argument(format!(
            "ensemble size must be >= 2, got {n}"
        )));
    }
    let d = truth0.len();
    let mut members = Ensemble::zeros(n, d);
    for (i, row) in members.rows_mut().enumerate() {
        row.copy_from_slice(truth0);
        add_gaussian(&mut rng.member(i).rng(), row, 1.0);
    }
    StateEnsemble::new(members, 0)
}

/// Update-step settings for all filters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterParams {
    pub diffusion: DiffusionConfig,
    pub enkf: EnkfConfig,
    pub sir: SirConfig,
}

/// How each step of a run is scored.
#[derive(Debug, Clone, Copy)]
pub enum Evaluation<'a> {
    None,
    /// Ensemble-mean RMSE against the truth.
    Rmse,
    /// W2 against one reference measure per step `1..=K`.
    W2(&'a [EmpiricalMeasure]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub observation: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Accepted reverse-ODE steps over members (diffusion only).
    pub solver_steps: Option<StepCounts>,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { step: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub filter: FilterKind,
    pub n: usize,
    pub simulation: usize,
    /// Simulation stream; every draw of the run derives from it.
    pub stream: RngStream,
    pub sigma_x: Option<f64>,
    pub sigma_y: Option<f64>,
    pub status: RunStatus,
    pub initial_mean: Vec<f64>,
    pub initial_std: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// Mean of the per-step metric; absent for failed or unscored runs.
    pub metric: Option<f64>,
    /// Forecast ensembles for steps `1..=K` when stored.
    #[serde(skip)]
    pub priors: Option<Vec<Ensemble>>,
    /// Analysis ensembles for steps `0..=K` when stored.
    #[serde(skip)]
    pub posteriors: Option<Vec<Ensemble>>,
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn step_range(&self) -> Option<StepCounts> {
        self.steps
            .iter()
            .filter_map(|s| s.solver_steps)
            .fold(None, |acc, c| {
                Some(match acc {
                    None => c,
                    Some(a) => StepCounts {
                        min: a.min.min(c.min),
                        max: a.max.max(c.max),
                    },
                })
            })
    }
}

/// Runs one filter for `K = observations.len()` steps. `sim` is the
/// simulation stream: the initial ensemble comes from its shared `INIT`
/// branch and everything afterwards from a filter-specific branch.
///
/// Failures are recorded in the returned record with their step index.
#[allow(clippy::too_many_arguments)]
pub fn run_filter(
    kind: FilterKind,
    params: &FilterParams,
    model: &Model,
    truth: &[Vec<f64>],
    observations: &[Vec<f64>],
    n: usize,
    sim: &RngStream,
    simulation: usize,
    evaluation: Evaluation<'_>,
    store_ensembles: bool,
) -> Result<RunRecord> {
    let start = Instant::now();
    if truth.len() != observations.len() + 1 {
        return Err(Error::Argument(format!(
            "truth has {} states for {} observations",
            truth.len(),
            observations.len()
        )));
    }
    if let Evaluation::W2(reference) = evaluation {
        if reference.len() != observations.len() {
            return Err(Error::Argument(format!(
                "reference has {} steps for {} observations",
                reference.len(),
                observations.len()
            )));
        }
    }
    let mut ensemble = initialize_ensemble(&truth[0], n, &sim.derive(role::INIT))?;
    let stream = sim.derive(role::FILTER).derive(kind.tag()).derive(n as u64);
    let bandwidths = (kind == FilterKind::Diffusion)
        .then_some((params.diffusion.sigma_x, params.diffusion.sigma_y));

    let mut record = RunRecord {
        filter: kind,
        n,
        simulation,
        stream: *sim,
        sigma_x: bandwidths.map(|b| b.0),
        sigma_y: bandwidths.map(|b| b.1),
        status: RunStatus::Completed,
        initial_mean: ensemble.members.mean(),
        initial_std: ensemble.members.std(),
        steps: Vec::with_capacity(observations.len()),
        metric: None,
        priors: store_ensembles.then(Vec::new),
        posteriors: store_ensembles.then(|| vec![ensemble.members.clone()]),
        elapsed_seconds: 0.0,
    };

    for (idx, y_hat) in observations.iter().enumerate() {
        let k = idx + 1;
        let step_stream = stream.step(k);
        let outcome = (|| -> Result<(StateEnsemble, StateEnsemble, Option<StepCounts>)> {
            let prior = propagate_ensemble(
                model.process.as_ref(),
                &ensemble,
                &step_stream.derive(role::PROCESS),
            )?;
            let update = step_stream.derive(role::FILTER);
            let (posterior, counts) = match kind {
                FilterKind::Diffusion => {
                    let u = diffusion_update(
                        &prior,
                        &model.observation,
                        y_hat,
                        &params.diffusion,
                        &update,
                    )?;
                    let counts = StepCounts {
                        min: u.steps.iter().copied().min().unwrap_or(0),
                        max: u.steps.iter().copied().max().unwrap_or(0),
                    };
                    (u.posterior, Some(counts))
                }
                FilterKind::Enkf => (
                    enkf_update(&prior, &model.observation, y_hat, &params.enkf, &update)?,
                    None,
                ),
                FilterKind::Sir => (
                    sir_update(&prior, &model.observation, y_hat, &params.sir, &update)?,
                    None,
                ),
            };
            if !posterior.members.is_finite() {
                return Err(Error::Argument("update produced non-finite members".into()));
            }
            Ok((prior, posterior, counts))
        })();
        let (prior, posterior, counts) = match outcome {
            Ok(v) => v,
            Err(e) => {
                record.status = RunStatus::Failed {
                    step: k,
                    message: e.to_string(),
                };
                break;
            }
        };
        let metric = match evaluation {
            Evaluation::None => None,
            Evaluation::Rmse => Some(rmse(&posterior, &truth[k])?),
            Evaluation::W2(reference) => Some(wasserstein2(
                &EmpiricalMeasure::from_ensemble(&posterior),
                &reference[idx],
            )?),
        };
        record.steps.push(StepRecord {
            k,
            observation: y_hat.clone(),
            truth: truth[k].clone(),
            mean: posterior.members.mean(),
            std: posterior.members.std(),
            solver_steps: counts,
            metric,
        });
        if let Some(p) = record.priors.as_mut() {
            p.push(prior.members);
        }
        if let Some(p) = record.posteriors.as_mut() {
            p.push(posterior.members.clone());
        }
        ensemble = StateEnsemble {
            members: posterior.members,
            step: k,
        };
    }

    if record.is_completed() && !record.steps.is_empty() {
        let values: Option<Vec<f64>> = record.steps.iter().map(|s| s.metric).collect();
        record.metric = values.map(|v| v.iter().sum::<f64>() / v.len() as f64);
    }
    record.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(record)
}
