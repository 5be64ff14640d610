use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FilterKind, MetricKind};
use super::reference::{prepare_simulations, ReferenceSet, Simulation};
use super::run::{run_filter, Evaluation, FilterParams};
use crate::diffusion::DiffusionConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Mean over simulations; infinite when any simulation failed.
    pub metric: f64,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub n: usize,
    pub metric_kind: MetricKind,
    pub cells: Vec<GridCell>,
    /// Index of the selected cell.
    pub best: usize,
}

impl GridResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma_x,sigma_y,metric,selected\n");
        for (i, c) in self.cells.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.sigma_x,
                c.sigma_y,
                c.metric,
                u8::from(i == self.best)
            ));
        }
        out
    }
}

/// Lowest metric; ties go to the larger `sigma_x`, then the larger `sigma_y`.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    (0..cells.len()).min_by(|&a, &b| {
        let (ca, cb) = (&cells[a], &cells[b]);
        ca.metric
            .total_cmp(&cb.metric)
            .then(cb.sigma_x.total_cmp(&ca.sigma_x))
            .then(cb.sigma_y.total_cmp(&ca.sigma_y))
    })
}

/// Scores every bandwidth pair of `config.grid` for the diffusion filter at
/// ensemble size `n`, averaging over the experiment's simulations.
pub fn grid_search(
    config: &ExperimentConfig,
    n: usize,
    stored: Option<&ReferenceSet>,
) -> Result<GridResult> {
    if config.grid.sigma_x.is_empty() || config.grid.sigma_y.is_empty() {
        return Err(Error::Config(
            "grid: sigma_x and sigma_y lists must be non-empty".into(),
        ));
    }
    if n < 2 {
        return Err(Error::Argument(format!(
            "ensemble size must be >= 2, got {n}"
        )));
    }
    let model = config.model()?;
    let sims = prepare_simulations(config, &model, stored)?;
    let pairs: Vec<(f64, f64)> = config
        .grid
        .sigma_x
        .iter()
        .flat_map(|&sx| config.grid.sigma_y.iter().map(move |&sy| (sx, sy)))
        .collect();
    let jobs: Vec<(usize, &Simulation)> = (0..pairs.len())
        .flat_map(|c| sims.iter().map(move |s| (c, s)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(c, sim)| {
            let (sigma_x, sigma_y) = pairs[c];
            let params = FilterParams {
                diffusion: DiffusionConfig {
                    sigma_x,
                    sigma_y,
                    ..config.diffusion
                },
                enkf: config.enkf,
                sir: config.sir,
            };
            let evaluation = match &sim.reference {
                Some(r) => Evaluation::W2(r),
                None => Evaluation::Rmse,
            };
            let record = run_filter(
                FilterKind::Diffusion,
                &params,
                &model,
                &sim.truth,
                &sim.observations,
                n,
                &sim.stream,
                sim.index,
                evaluation,
                false,
            )?;
            Ok(record.metric)
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let cells: Vec<GridCell> = pairs
        .iter()
        .enumerate()
        .map(|(c, &(sigma_x, sigma_y))| {
            let values: Vec<Option<f64>> = scores[c * sims.len()..(c + 1) * sims.len()].to_vec();
            let metric = match values.iter().copied().collect::<Option<Vec<f64>>>() {
                Some(v) => v.iter().sum::<f64>() / v.len() as f64,
                None => f64::INFINITY,
            };
            GridCell {
                sigma_x,
                sigma_y,
                metric,
                values,
            }
        })
        .collect();
    let best = select_best(&cells).expect("grid is non-empty");
    Ok(GridResult {
        n,
        metric_kind: config.metric_kind(),
        cells,
        best,
    })
}
