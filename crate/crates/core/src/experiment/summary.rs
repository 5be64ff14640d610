use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FilterKind, MetricKind, SystemKind, SCHEMA_VERSION};
use super::persist::{run_dir_name, StepsTable};
use super::run::{RunRecord, RunStatus, StepCounts};
use crate::error::{Error, Result};

/// Aggregate over simulations for one (filter, N) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub filter: FilterKind,
    pub n: usize,
    pub sigma_x: Option<f64>,
    pub sigma_y: Option<f64>,
    /// Run directory per simulation, in simulation order.
    pub runs: Vec<String>,
    /// Time-averaged metric per simulation; `null` for failed runs.
    pub values: Vec<Option<f64>>,
    /// Mean over completed simulations.
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub completed: usize,
    pub failed: usize,
    pub step_range: Option<StepCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub system: SystemKind,
    pub dim: usize,
    pub steps: usize,
    pub sims: usize,
    pub seed: u64,
    pub metric: MetricKind,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub run: String,
    pub filter: FilterKind,
    pub n: usize,
    pub simulation: usize,
    pub step: usize,
    pub message: String,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

impl Summary {
    pub fn from_records(config: &ExperimentConfig, records: &[RunRecord]) -> Self {
        let mut groups: BTreeMap<(usize, usize), Vec<&RunRecord>> = BTreeMap::new();
        for r in records {
            let order = config
                .filters
                .iter()
                .position(|f| *f == r.filter)
                .unwrap_or(usize::MAX);
            groups.entry((r.n, order)).or_default().push(r);
        }
        let cells = groups
            .into_values()
            .map(|mut runs| {
                runs.sort_by_key(|r| r.simulation);
                let values: Vec<Option<f64>> = runs.iter().map(|r| r.metric).collect();
                let ok: Vec<f64> = values.iter().flatten().copied().collect();
                let step_range = runs.iter().filter_map(|r| r.step_range()).fold(
                    None,
                    |acc: Option<StepCounts>, c| {
                        Some(match acc {
                            None => c,
                            Some(a) => StepCounts {
                                min: a.min.min(c.min),
                                max: a.max.max(c.max),
                            },
                        })
                    },
                );
                CellSummary {
                    filter: runs[0].filter,
                    n: runs[0].n,
                    sigma_x: runs[0].sigma_x,
                    sigma_y: runs[0].sigma_y,
                    runs: runs.iter().map(|r| run_dir_name(r)).collect(),
                    mean: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
                    median: median(&ok),
                    completed: runs.iter().filter(|r| r.is_completed()).count(),
                    failed: runs.iter().filter(|r| !r.is_completed()).count(),
                    values,
                    step_range,
                }
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            system: config.system,
            dim: config.dim,
            steps: config.steps,
            sims: config.sims,
            seed: config.seed,
            metric: config.metric_kind(),
            cells,
        }
    }

    pub fn failures(records: &[RunRecord]) -> Vec<Failure> {
        let mut out: Vec<Failure> = records
            .iter()
            .filter_map(|r| match &r.status {
                RunStatus::Completed => None,
                RunStatus::Failed { step, message } => Some(Failure {
                    run: run_dir_name(r),
                    filter: r.filter,
                    n: r.n,
                    simulation: r.simulation,
                    step: *step,
                    message: message.clone(),
                }),
            })
            .collect();
        out.sort_by(|a, b| a.run.cmp(&b.run));
        out
    }

    pub fn cell(&self, filter: FilterKind, n: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.filter == filter && c.n == n)
    }

    /// Differences that make two summaries unsuitable for one table.
    pub fn incompatibilities(&self, other: &Summary) -> Vec<String> {
        let mut diffs = Vec::new();
        macro_rules! cmp {
            ($field:ident) => {
                if self.$field != other.$field {
                    diffs.push(format!(
                        "{}: {:?} vs {:?}",
                        stringify!($field),
                        self.$field,
                        other.$field
                    ));
                }
            };
        }
        cmp!(system);
        cmp!(dim);
        cmp!(steps);
        cmp!(sims);
        cmp!(seed);
        cmp!(metric);
        diffs
    }

    /// Recomputes every stored value from the per-step CSVs under `runs_dir`
    /// and returns the largest absolute discrepancy.
    pub fn verify_against_csv(&self, runs_dir: &Path) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for cell in &self.cells {
            for (run, value) in cell.runs.iter().zip(&cell.values) {
                let Some(value) = value else { continue };
                let table = StepsTable::load(&runs_dir.join(run).join("steps.csv"))?;
                let metric = table.column("metric").ok_or_else(|| {
                    Error::Config(format!("{run}: steps.csv has no metric column"))
                })?;
                let per_step: Vec<f64> = metric.iter().skip(1).flatten().copied().collect();
                if per_step.is_empty() {
                    return Err(Error::Config(format!(
                        "{run}: steps.csv has no metric values"
                    )));
                }
                let recomputed = per_step.iter().sum::<f64>() / per_step.len() as f64;
                worst = worst.max((recomputed - value).abs());
            }
        }
        Ok(worst)
    }
}

/// Table with one row per ensemble size and one column per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub metric: MetricKind,
    pub filters: Vec<FilterKind>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: usize,
    pub sigma_x: Option<f64>,
    pub sigma_y: Option<f64>,
    pub step_range: Option<StepCounts>,
    /// Mean over simulations, aligned with `Report::filters`.
    pub values: Vec<Option<f64>>,
}

impl ReportRow {
    pub fn best(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|x| (i, x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

impl Report {
    /// Merges summaries of compatible experiments. Conflicting settings or
    /// duplicate cells are refused with the list of differences.
    pub fn build(summaries: &[Summary]) -> Result<Self> {
        let first = summaries
            .first()
            .ok_or_else(|| Error::Argument("no summaries to report".into()))?;
        for s in &summaries[1..] {
            let diffs = first.incompatibilities(s);
            if !diffs.is_empty() {
                return Err(Error::Config(format!(
                    "incompatible runs:\n  {}",
                    diffs.join("\n  ")
                )));
            }
        }
        let mut cells: BTreeMap<(usize, FilterKind), &CellSummary> = BTreeMap::new();
        for c in summaries.iter().flat_map(|s| &s.cells) {
            if cells.insert((c.n, c.filter), c).is_some() {
                return Err(Error::Config(format!(
                    "cell ({}, N = {}) appears in more than one run",
                    c.filter, c.n
                )));
            }
        }
        let mut filters: Vec<FilterKind> = cells.keys().map(|k| k.1).collect();
        filters.sort();
        filters.dedup();
        let mut sizes: Vec<usize> = cells.keys().map(|k| k.0).collect();
        sizes.dedup();
        let rows = sizes
            .into_iter()
            .map(|n| {
                let diffusion = cells.get(&(n, FilterKind::Diffusion));
                ReportRow {
                    n,
                    sigma_x: diffusion.and_then(|c| c.sigma_x),
                    sigma_y: diffusion.and_then(|c| c.sigma_y),
                    step_range: diffusion.and_then(|c| c.step_range),
                    values: filters
                        .iter()
                        .map(|f| cells.get(&(n, *f)).and_then(|c| c.mean))
                        .collect(),
                }
            })
            .collect();
        Ok(Self {
            metric: first.metric,
            filters,
            rows,
        })
    }

    fn metric_label(&self) -> &'static str {
        match self.metric {
            MetricKind::W2 => "E_W2",
            MetricKind::Rmse => "E_RMSE",
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,sigma_x,sigma_y,steps_min,steps_max");
        for f in &self.filters {
            let _ = write!(out, ",{f}");
        }
        out.push_str(",best\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.n,
                opt(r.sigma_x),
                opt(r.sigma_y),
                r.step_range.map(|s| s.min.to_string()).unwrap_or_default(),
                r.step_range.map(|s| s.max.to_string()).unwrap_or_default()
            );
            for v in &r.values {
                let _ = write!(out, ",{}", opt(*v));
            }
            let best = r.best().map(|i| self.filters[i].name()).unwrap_or("");
            let _ = writeln!(out, ",{best}");
        }
        out
    }

    /// Aligned text table; the best filter in each row is marked with `*`.
    pub fn to_text(&self) -> String {
        let mut header = vec![
            "N".to_string(),
            "sigma_x".into(),
            "sigma_y".into(),
            "steps".into(),
        ];
        header.extend(
            self.filters
                .iter()
                .map(|f| format!("{f} {}", self.metric_label())),
        );
        let mut table = vec![header];
        for r in &self.rows {
            let best = r.best();
            let mut row = vec![
                r.n.to_string(),
                r.sigma_x
                    .map(|v| format!("{v:.3}"))
                    .unwrap_or_else(|| "-".into()),
                r.sigma_y
                    .map(|v| format!("{v:.2}"))
                    .unwrap_or_else(|| "-".into()),
                r.step_range
                    .map(|s| format!("{}-{}", s.min, s.max))
                    .unwrap_or_else(|| "-".into()),
            ];
            row.extend(r.values.iter().enumerate().map(|(i, v)| match v {
                Some(x) if Some(i) == best => format!("*{x:.3}"),
                Some(x) => format!("{x:.3}"),
                None => "failed".into(),
            }));
            table.push(row);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in table.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:>w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out.push_str("* best filter in row\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn record(filter: FilterKind, n: usize, sim: usize, metric: Option<f64>) -> RunRecord {
        RunRecord {
            filter,
            n,
            simulation: sim,
            stream: RngStream::new(0, sim as u64),
            sigma_x: (filter == FilterKind::Diffusion).then_some(0.1),
            sigma_y: (filter == FilterKind::Diffusion).then_some(0.25),
            status: match metric {
                Some(_) => RunStatus::Completed,
                None => RunStatus::Failed {
                    step: 3,
                    message: "boom".into(),
                },
            },
            initial_mean: vec![],
            initial_std: vec![],
            steps: vec![],
            metric,
            priors: None,
            posteriors: None,
            elapsed_seconds: 1.0,
        }
    }

    #[test]
    fn summary_groups_cells_and_skips_failures() {
        let config = ExperimentConfig {
            sims: 3,
            ..ExperimentConfig::lorenz63()
        };
        let records = vec![
            record(FilterKind::Enkf, 100, 1, Some(4.0)),
            record(FilterKind::Diffusion, 100, 0, Some(1.0)),
            record(FilterKind::Diffusion, 100, 1, None),
            record(FilterKind::Diffusion, 100, 2, Some(3.0)),
            record(FilterKind::Enkf, 100, 0, Some(2.0)),
        ];
        let s = Summary::from_records(&config, &records);
        assert_eq!(s.cells.len(), 2);
        let d = s.cell(FilterKind::Diffusion, 100).unwrap();
        assert_eq!(d.values, vec![Some(1.0), None, Some(3.0)]);
        assert_eq!(
            (d.mean, d.median, d.completed, d.failed),
            (Some(2.0), Some(2.0), 2, 1)
        );
        let failures = Summary::failures(&records);
        assert_eq!(failures.len(), 1);
        assert_eq!((failures[0].simulation, failures[0].step), (1, 3));
    }

    #[test]
    fn report_marks_best_and_refuses_mixtures() {
        let config = ExperimentConfig {
            sims: 1,
            ..ExperimentConfig::lorenz63()
        };
        let a = Summary::from_records(
            &config,
            &[
                record(FilterKind::Diffusion, 100, 0, Some(8.5)),
                record(FilterKind::Sir, 100, 0, Some(17.4)),
            ],
        );
        let b = Summary::from_records(&config, &[record(FilterKind::Enkf, 100, 0, Some(13.8))]);
        let report = Report::build(&[a.clone(), b]).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(
            report.filters,
            vec![FilterKind::Diffusion, FilterKind::Enkf, FilterKind::Sir]
        );
        assert_eq!(report.rows[0].best(), Some(0));
        let text = report.to_text();
        assert!(text.contains("*8.500") && text.contains("13.800"), "{text}");
        assert!(report
            .to_csv()
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(",diffusion"));

        let other = Summary {
            seed: 5,
            ..a.clone()
        };
        let err = Report::build(&[a.clone(), other]).unwrap_err().to_string();
        assert!(err.contains("seed: 0 vs 5"), "{err}");
        assert!(Report::build(&[a.clone(), a]).is_err());
        assert!(Report::build(&[]).is_err());
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
