//! Twin-experiment harness: truth and observation generation, ensemble
//! initialization, filter runs over (filter, N, simulation) cells, metric
//! evaluation, bandwidth grid search and replayable run records.
//!
//! Every simulation owns the stream `(seed, index)`. Truth, observations and
//! the initial ensemble come from branches shared by all filters; each filter
//! then draws from its own branch, so filters face the same realization and
//! results do not depend on the worker count.

mod config;
mod grid;
mod persist;
mod reference;
mod run;
mod summary;

use std::path::Path;

use rayon::prelude::*;

pub use config::{
    BandwidthEntry, DynamicsParams, ExperimentConfig, FilterKind, GridConfig, MetricKind, Model,
    NoiseConfig, ReferenceConfig, SystemKind, SCHEMA_VERSION,
};
pub use grid::{grid_search, select_best, GridCell, GridResult};
pub use persist::{
    ensemble_path, load_record, load_stored_ensemble, read_ensemble, run_dir_name, save_record,
    steps_csv, write_ensemble, Stage, StepsTable, ENSEMBLE_MAGIC, ENSEMBLE_VERSION,
};
pub use reference::{
    build_reference, prepare_simulation, prepare_simulations, simulate, simulation_stream,
    subsample_series, ReferenceMeta, ReferenceSet, Simulation, MAX_REFERENCE_DIM,
};
pub use run::{
    generate_truth, initialize_ensemble, realize_observations, run_filter, Evaluation,
    FilterParams, RunRecord, RunStatus, StepCounts, StepRecord,
};
pub use summary::{median, CellSummary, Failure, Report, ReportRow, Summary};

use crate::error::{Error, Result};

/// Caps the global worker pool at `DIFFUSIM_THREADS` when set. Returns the
/// number of workers in use.
pub fn configure_threads() -> Result<usize> {
    if let Ok(value) = std::env::var("DIFFUSIM_THREADS") {
        let threads: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| {
                Error::Config(format!(
                    "DIFFUSIM_THREADS must be a positive integer, got {value:?}"
                ))
            })?;
        // A pool may already exist (tests, embedding); keep it in that case.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(rayon::current_num_threads())
}

/// All records of one experiment plus their summary.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
    pub failures: Vec<Failure>,
}

impl Experiment {
    pub fn all_completed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every (filter, N, simulation) cell of `config`.
pub fn run_experiment(
    config: &ExperimentConfig,
    stored: Option<&ReferenceSet>,
) -> Result<Experiment> {
    config.validate()?;
    if let Some(r) = stored {
        r.check_compatible(config)?;
    }
    let model = config.model()?;
    let sims = prepare_simulations(config, &model, stored)?;
    let mut jobs = Vec::new();
    for sim in &sims {
        for &filter in &config.filters {
            for &n in &config.ensemble_sizes {
                jobs.push((sim, filter, n));
            }
        }
    }
    let records = jobs
        .par_iter()
        .map(|&(sim, filter, n)| {
            let params = FilterParams {
                diffusion: config.diffusion_for(n),
                enkf: config.enkf,
                sir: config.sir,
            };
            let evaluation = match &sim.reference {
                Some(r) => Evaluation::W2(r),
                None => Evaluation::Rmse,
            };
            run_filter(
                filter,
                &params,
                &model,
                &sim.truth,
                &sim.observations,
                n,
                &sim.stream,
                sim.index,
                evaluation,
                config.store_ensembles,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_records(config, &records);
    let failures = Summary::failures(&records);
    Ok(Experiment {
        records,
        summary,
        failures,
    })
}

/// Writes the layout documented in the persistence module.
pub fn write_experiment(
    dir: &Path,
    config: &ExperimentConfig,
    experiment: &Experiment,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.snapshot"), config.snapshot()?)?;
    persist::write_json(&dir.join("summary.json"), &experiment.summary)?;
    persist::write_json(&dir.join("failures.json"), &experiment.failures)?;
    let report = Report::build(std::slice::from_ref(&experiment.summary))?;
    std::fs::write(dir.join("summary.csv"), report.to_csv())?;
    std::fs::write(dir.join("summary.txt"), report.to_text())?;
    std::fs::write(
        dir.join("timings.json"),
        persist::timings_json(&experiment.records)?,
    )?;
    let runs = dir.join("runs");
    for r in &experiment.records {
        save_record(&runs, r)?;
    }
    Ok(())
}

pub fn load_summary(dir: &Path) -> Result<Summary> {
    persist::read_json(&dir.join("summary.json"))
}

/// Reads `config.snapshot` back; the leading comment line is ignored by TOML.
pub fn load_snapshot(dir: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&dir.join("config.snapshot"))
}
