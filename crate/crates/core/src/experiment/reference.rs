use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MetricKind, Model, SystemKind};
use super::persist::{read_ensemble, write_ensemble};
use super::run::{generate_truth, initialize_ensemble, realize_observations};
use crate::error::{Error, Result};
use crate::filters::{sir_update, SirConfig};
use crate::metrics::{subsample_reference, EmpiricalMeasure};
use crate::rng::{role, RngStream};
use crate::ssm::propagate_ensemble;

/// Largest state dimension for which a large-N reference SIR is attempted.
pub const MAX_REFERENCE_DIM: usize = 6;

/// Per-step equally weighted measures (steps `1..=K`) from a large SIR run
/// on the realized observations. The initial ensemble shares the filters'
/// `INIT` stream; propagation and resampling use the `REFERENCE` branch.
pub fn build_reference(
    model: &Model,
    truth0: &[f64],
    observations: &[Vec<f64>],
    n_true: usize,
    sim: &RngStream,
) -> Result<Vec<EmpiricalMeasure>> {
    let d = truth0.len();
    if d > MAX_REFERENCE_DIM {
        return Err(Error::Capability(format!(
            "reference SIR is limited to dim <= {MAX_REFERENCE_DIM}, got {d}"
        )));
    }
    let mut ensemble = initialize_ensemble(truth0, n_true, &sim.derive(role::INIT))?;
    let stream = sim.derive(role::REFERENCE);
    let mut out = Vec::with_capacity(observations.len());
    for (idx, y_hat) in observations.iter().enumerate() {
        let step = stream.step(idx + 1);
        let prior = propagate_ensemble(
            model.process.as_ref(),
            &ensemble,
            &step.derive(role::PROCESS),
        )?;
        ensemble = sir_update(
            &prior,
            &model.observation,
            y_hat,
            &SirConfig::default(),
            &step.derive(role::FILTER),
        )?;
        out.push(EmpiricalMeasure::from_ensemble(&ensemble));
    }
    Ok(out)
}

/// Per-step reference subsamples of size `m`, drawn from `sim`'s
/// `SUBSAMPLE` branch so every filter is scored against the same atoms.
pub fn subsample_series(
    reference: &[EmpiricalMeasure],
    m: usize,
    sim: &RngStream,
) -> Result<Vec<EmpiricalMeasure>> {
    let stream = sim.derive(role::SUBSAMPLE);
    reference
        .iter()
        .enumerate()
        .map(|(idx, r)| subsample_reference(r, m.min(r.len()), &mut stream.step(idx + 1).rng()))
        .collect()
}

/// Shared inputs of one simulation: truth, observations and, for W2
/// scoring, the subsampled reference.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub index: usize,
    pub stream: RngStream,
    pub truth: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
    pub reference: Option<Vec<EmpiricalMeasure>>,
}

pub fn simulation_stream(seed: u64, index: usize) -> RngStream {
    RngStream::new(seed, index as u64).derive(role::SIMULATION)
}

/// Truth and observations for simulation `index`.
pub fn simulate(config: &ExperimentConfig, model: &Model, index: usize) -> Result<Simulation> {
    let stream = simulation_stream(config.seed, index);
    let truth = generate_truth(
        model.truth_map.as_ref(),
        config.steps,
        &stream.derive(role::TRUTH),
    )?;
    let observations = realize_observations(
        &truth,
        &model.observation,
        &stream.derive(role::OBSERVATIONS),
    )?;
    Ok(Simulation {
        index,
        stream,
        truth,
        observations,
        reference: None,
    })
}

/// Simulation plus, for W2 scoring, a reference built here or taken from
/// `stored`.
pub fn prepare_simulation(
    config: &ExperimentConfig,
    model: &Model,
    index: usize,
    stored: Option<&ReferenceSet>,
) -> Result<Simulation> {
    let mut sim = simulate(config, model, index)?;
    if config.metric_kind() == MetricKind::W2 {
        let full = match stored {
            Some(set) => set.simulation(index)?.to_vec(),
            None => build_reference(
                model,
                &sim.truth[0],
                &sim.observations,
                config.reference.particles,
                &sim.stream,
            )?,
        };
        if full.len() != config.steps {
            return Err(Error::Config(format!(
                "reference covers {} steps but the experiment has {}",
                full.len(),
                config.steps
            )));
        }
        sim.reference = Some(subsample_series(
            &full,
            config.reference.subsample,
            &sim.stream,
        )?);
    }
    Ok(sim)
}

pub fn prepare_simulations(
    config: &ExperimentConfig,
    model: &Model,
    stored: Option<&ReferenceSet>,
) -> Result<Vec<Simulation>> {
    (0..config.sims)
        .into_par_iter()
        .map(|s| prepare_simulation(config, model, s, stored))
        .collect()
}

/// Identity of the experiment a stored reference was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub system: SystemKind,
    pub dim: usize,
    pub steps: usize,
    pub sims: usize,
    pub seed: u64,
    pub particles: usize,
    /// Full config snapshot used to build the reference.
    pub config: String,
}

/// References for every simulation of an experiment.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    pub meta: ReferenceMeta,
    pub per_simulation: Vec<Vec<EmpiricalMeasure>>,
}

impl ReferenceSet {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let model = config.model()?;
        let per_simulation = (0..config.sims)
            .into_par_iter()
            .map(|s| {
                let sim = simulate(config, &model, s)?;
                build_reference(
                    &model,
                    &sim.truth[0],
                    &sim.observations,
                    config.reference.particles,
                    &sim.stream,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            meta: Self::meta_for(config)?,
            per_simulation,
        })
    }

    fn meta_for(config: &ExperimentConfig) -> Result<ReferenceMeta> {
        Ok(ReferenceMeta {
            system: config.system,
            dim: config.dim,
            steps: config.steps,
            sims: config.sims,
            seed: config.seed,
            particles: config.reference.particles,
            config: config.to_toml()?,
        })
    }

    pub fn simulation(&self, index: usize) -> Result<&[EmpiricalMeasure]> {
        self.per_simulation
            .get(index)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("reference has no simulation {index}")))
    }

    /// Refuses references built for a different truth/observation path.
    pub fn check_compatible(&self, config: &ExperimentConfig) -> Result<()> {
        let ours = &self.meta;
        let mut diffs = Vec::new();
        if ours.system != config.system {
            diffs.push(format!("system: {:?} vs {:?}", ours.system, config.system));
        }
        if ours.dim != config.dim {
            diffs.push(format!("dim: {} vs {}", ours.dim, config.dim));
        }
        if ours.steps != config.steps {
            diffs.push(format!("steps: {} vs {}", ours.steps, config.steps));
        }
        if ours.seed != config.seed {
            diffs.push(format!("seed: {} vs {}", ours.seed, config.seed));
        }
        if ours.sims < config.sims {
            diffs.push(format!(
                "sims: reference has {}, experiment needs {}",
                ours.sims, config.sims
            ));
        }
        let built: ExperimentConfig =
            toml::from_str(&ours.config).map_err(|e| Error::Config(e.to_string()))?;
        if built.dynamics != config.dynamics
            || built.propagator != config.propagator
            || built.noise != config.noise
        {
            diffs.push("dynamics, propagator or noise settings differ".into());
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "reference does not match the experiment: {}",
                diffs.join("; ")
            )))
        }
    }

    /// `dir/reference.json` plus `dir/sim_SSS/step_KKKK.bin`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta =
            serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join("reference.json"), meta + "\n")?;
        for (s, steps) in self.per_simulation.iter().enumerate() {
            let sub = dir.join(format!("sim_{s:03}"));
            std::fs::create_dir_all(&sub)?;
            for (idx, m) in steps.iter().enumerate() {
                write_ensemble(&sub.join(format!("step_{:04}.bin", idx + 1)), m.support())?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("reference.json");
        let text = std::fs::read_to_string(&path)?;
        let meta: ReferenceMeta = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let per_simulation = (0..meta.sims)
            .map(|s| {
                let sub = dir.join(format!("sim_{s:03}"));
                (1..=meta.steps)
                    .map(|k| {
                        EmpiricalMeasure::uniform(read_ensemble(
                            &sub.join(format!("step_{k:04}.bin")),
                        )?)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            meta,
            per_simulation,
        })
    }
}
