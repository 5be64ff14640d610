use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionConfig;
use crate::dynamics::{Flow, Lorenz63Params, Lorenz96Params, PropagatorConfig, Scheme};
use crate::error::{Error, Result};
use crate::filters::{EnkfConfig, SirConfig};
use crate::ssm::{
    AdditiveNoiseProcess, DeterministicMap, GaussianObservation, ObservationOperator, ProcessModel,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    L63,
    L96,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Diffusion,
    Enkf,
    Sir,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::Diffusion, FilterKind::Enkf, FilterKind::Sir];

    pub fn name(self) -> &'static str {
        match self {
            Self::Diffusion => "diffusion",
            Self::Enkf => "enkf",
            Self::Sir => "sir",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Self::Diffusion => 1,
            Self::Enkf => 2,
            Self::Sir => 3,
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffusion" => Ok(Self::Diffusion),
            "enkf" => Ok(Self::Enkf),
            "sir" => Ok(Self::Sir),
            other => Err(Error::Argument(format!("unknown filter {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Time-averaged Wasserstein-2 distance to a reference filter.
    W2,
    /// Time-averaged RMSE of the ensemble mean against the truth.
    Rmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub forcing: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        let l63 = Lorenz63Params::default();
        Self {
            sigma: l63.sigma,
            rho: l63.rho,
            beta: l63.beta,
            forcing: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub process_variance: f64,
    pub observation_variance: f64,
}

/// Bandwidths for one ensemble size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthEntry {
    pub n: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            sigma_x: vec![0.025, 0.05, 0.1, 0.15, 0.2],
            sigma_y: vec![0.25, 0.5, 0.75, 1.0, 1.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Particle count of the reference SIR run.
    pub particles: usize,
    /// Reference atoms drawn per step for each W2 evaluation.
    pub subsample: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            particles: 20_000,
            subsample: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub system: SystemKind,
    pub dim: usize,
    #[serde(default)]
    pub dynamics: DynamicsParams,
    pub propagator: PropagatorConfig,
    pub noise: NoiseConfig,
    /// Number of assimilation steps K.
    pub steps: usize,
    pub ensemble_sizes: Vec<usize>,
    pub filters: Vec<FilterKind>,
    #[serde(default = "default_sims")]
    pub sims: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub metric: Option<MetricKind>,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    /// Per-ensemble-size bandwidths; sizes not listed use `diffusion`.
    #[serde(default)]
    pub bandwidths: Vec<BandwidthEntry>,
    #[serde(default)]
    pub enkf: EnkfConfig,
    #[serde(default)]
    pub sir: SirConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub store_ensembles: bool,
}

fn default_sims() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Process model, truth map and observation model of one experiment.
pub struct Model {
    pub process: Box<dyn ProcessModel>,
    pub truth_map: Box<dyn DeterministicMap>,
    pub observation: GaussianObservation,
}

impl ExperimentConfig {
    /// Lorenz-63 twin experiment with the standard benchmark settings.
    pub fn lorenz63() -> Self {
        let bw = |n, sigma_x, sigma_y| BandwidthEntry {
            n,
            sigma_x,
            sigma_y,
        };
        Self {
            schema_version: SCHEMA_VERSION,
            system: SystemKind::L63,
            dim: 3,
            dynamics: DynamicsParams::default(),
            propagator: PropagatorConfig {
                scheme: Scheme::ForwardEuler,
                interval: 0.1,
                inner_step: 0.01,
            },
            noise: NoiseConfig {
                process_variance: 0.01 * 0.01,
                observation_variance: 0.5 * 0.5,
            },
            steps: 100,
            ensemble_sizes: vec![100],
            filters: FilterKind::ALL.to_vec(),
            sims: default_sims(),
            seed: 0,
            metric: None,
            diffusion: DiffusionConfig::with_bandwidths(0.1, 0.25),
            bandwidths: vec![
                bw(20, 0.2, 0.5),
                bw(50, 0.1, 0.5),
                bw(100, 0.1, 0.25),
                bw(250, 0.05, 0.25),
                bw(500, 0.025, 0.25),
                bw(1000, 0.025, 0.25),
            ],
            enkf: EnkfConfig::default(),
            sir: SirConfig::default(),
            grid: GridConfig::default(),
            reference: ReferenceConfig::default(),
            output_dir: default_output_dir(),
            store_ensembles: false,
        }
    }

    /// Lorenz-96 twin experiment; dimensions 10 and 20 carry the tuned
    /// bandwidth tables.
    pub fn lorenz96(dim: usize) -> Self {
        let bw = |n, sigma_x, sigma_y| BandwidthEntry {
            n,
            sigma_x,
            sigma_y,
        };
        let bandwidths = match dim {
            10 => vec![
                bw(20, 0.2, 1.0),
                bw(50, 0.2, 0.75),
                bw(100, 0.2, 0.5),
                bw(250, 0.1, 0.5),
                bw(500, 0.1, 0.5),
                bw(1000, 0.05, 0.5),
            ],
            20 => vec![
                bw(20, 0.2, 1.5),
                bw(50, 0.15, 1.0),
                bw(100, 0.15, 0.75),
                bw(250, 0.1, 0.75),
                bw(500, 0.1, 0.75),
                bw(1000, 0.1, 0.5),
            ],
            _ => Vec::new(),
        };
        Self {
            system: SystemKind::L96,
            dim,
            propagator: PropagatorConfig {
                scheme: Scheme::Rk4,
                interval: 0.1,
                inner_step: 0.01,
            },
            noise: NoiseConfig {
                process_variance: 0.01 * 0.01,
                observation_variance: 0.5,
            },
            steps: 500,
            diffusion: DiffusionConfig::with_bandwidths(0.2, 0.5),
            bandwidths,
            ..Self::lorenz63()
        }
    }

    pub fn preset(system: SystemKind, dim: Option<usize>) -> Result<Self> {
        match (system, dim) {
            (SystemKind::L63, None | Some(3)) => Ok(Self::lorenz63()),
            (SystemKind::L63, Some(d)) => {
                Err(Error::Config(format!("Lorenz-63 has dim 3, got {d}")))
            }
            (SystemKind::L96, d) => Ok(Self::lorenz96(d.unwrap_or(10))),
        }
    }

    /// Parses a TOML document. Errors carry the offending line and key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// TOML text behind a version comment, as written to `config.snapshot`.
    pub fn snapshot(&self) -> Result<String> {
        Ok(super::persist::config_header(&self.to_toml()?))
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.metric.unwrap_or(match self.system {
            SystemKind::L63 => MetricKind::W2,
            SystemKind::L96 => MetricKind::Rmse,
        })
    }

    /// Diffusion settings for ensemble size `n`.
    pub fn diffusion_for(&self, n: usize) -> DiffusionConfig {
        match self.bandwidths.iter().find(|b| b.n == n) {
            Some(b) => DiffusionConfig {
                sigma_x: b.sigma_x,
                sigma_y: b.sigma_y,
                ..self.diffusion
            },
            None => self.diffusion,
        }
    }

    /// Replaces every bandwidth with a single pair.
    pub fn set_bandwidths(&mut self, sigma_x: Option<f64>, sigma_y: Option<f64>) {
        if sigma_x.is_none() && sigma_y.is_none() {
            return;
        }
        for n in self.ensemble_sizes.clone() {
            let current = self.diffusion_for(n);
            let entry = BandwidthEntry {
                n,
                sigma_x: sigma_x.unwrap_or(current.sigma_x),
                sigma_y: sigma_y.unwrap_or(current.sigma_y),
            };
            match self.bandwidths.iter_mut().find(|b| b.n == n) {
                Some(b) => *b = entry,
                None => self.bandwidths.push(entry),
            }
        }
        if let Some(v) = sigma_x {
            self.diffusion.sigma_x = v;
        }
        if let Some(v) = sigma_y {
            self.diffusion.sigma_y = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        match self.system {
            SystemKind::L63 if self.dim != 3 => {
                return bad(format!("dim: Lorenz-63 has dim 3, got {}", self.dim))
            }
            SystemKind::L96 if self.dim < 4 => {
                return bad(format!("dim: Lorenz-96 needs dim >= 4, got {}", self.dim))
            }
            _ => {}
        }
        if self.steps < 1 {
            return bad("steps: K must be >= 1".into());
        }
        if self.sims < 1 {
            return bad("sims: S must be >= 1".into());
        }
        if self.ensemble_sizes.is_empty() {
            return bad("ensemble_sizes: at least one size is required".into());
        }
        if let Some(n) = self.ensemble_sizes.iter().find(|&&n| n < 2) {
            return bad(format!("ensemble_sizes: sizes must be >= 2, got {n}"));
        }
        if self.filters.is_empty() {
            return bad("filters: at least one filter is required".into());
        }
        if let Err(e) = self.propagator.substeps() {
            return bad(format!("propagator: {e}"));
        }
        for (key, v) in [
            ("noise.process_variance", self.noise.process_variance),
            (
                "noise.observation_variance",
                self.noise.observation_variance,
            ),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{key}: must be finite and >= 0, got {v}"));
            }
        }
        self.diffusion
            .validate()
            .or_else(|e| bad(format!("diffusion: {e}")))?;
        for b in &self.bandwidths {
            if !(b.sigma_x > 0.0
                && b.sigma_y > 0.0
                && b.sigma_x.is_finite()
                && b.sigma_y.is_finite())
            {
                return bad(format!(
                    "bandwidths: entry for n = {} must be positive",
                    b.n
                ));
            }
        }
        if !(self.enkf.jitter >= 0.0) {
            return bad(format!(
                "enkf.jitter: must be >= 0, got {}",
                self.enkf.jitter
            ));
        }
        for (key, grid) in [
            ("grid.sigma_x", &self.grid.sigma_x),
            ("grid.sigma_y", &self.grid.sigma_y),
        ] {
            if grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad(format!("{key}: bandwidths must be positive"));
            }
        }
        if self.reference.subsample < 1 || self.reference.particles < self.reference.subsample {
            return bad(format!(
                "reference: need 1 <= subsample <= particles, got subsample {} and particles {}",
                self.reference.subsample, self.reference.particles
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        let observation = GaussianObservation::new(
            match self.system {
                SystemKind::L63 => ObservationOperator::Component { index: 2 },
                SystemKind::L96 => ObservationOperator::Arctan,
            },
            self.noise.observation_variance,
        )?;
        let (process, truth_map): (Box<dyn ProcessModel>, Box<dyn DeterministicMap>) =
            match self.system {
                SystemKind::L63 => {
                    let field = Lorenz63Params {
                        sigma: self.dynamics.sigma,
                        rho: self.dynamics.rho,
                        beta: self.dynamics.beta,
                    };
                    let flow = Flow {
                        field,
                        propagator: self.propagator,
                    };
                    (
                        Box::new(AdditiveNoiseProcess::new(
                            flow,
                            self.noise.process_variance,
                        )?),
                        Box::new(flow),
                    )
                }
                SystemKind::L96 => {
                    let field = Lorenz96Params::new(self.dynamics.forcing, self.dim)?;
                    let flow = Flow {
                        field,
                        propagator: self.propagator,
                    };
                    (
                        Box::new(AdditiveNoiseProcess::new(
                            flow,
                            self.noise.process_variance,
                        )?),
                        Box::new(flow),
                    )
                }
            };
        Ok(Model {
            process,
            truth_map,
            observation,
        })
    }
}
