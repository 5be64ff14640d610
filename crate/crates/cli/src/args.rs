use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffusim::experiment::{FilterKind, SystemKind};

#[derive(Debug, Parser)]
#[command(
    name = "diffusim",
    version,
    about = "Diffusion-model filtering experiments on Lorenz systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Base seed; simulation s uses the stream (seed, s)
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate truth trajectories and observations
    Simulate(ExperimentArgs),
    /// Build and store large-ensemble SIR references for W2 scoring
    Reference(ExperimentArgs),
    /// Run every (filter, N, simulation) cell of an experiment
    Run {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Stored reference (from `reference`) instead of building one
        #[arg(long, value_name = "PATH")]
        reference: Option<PathBuf>,
    },
    /// Score every bandwidth pair of the grid for the diffusion filter
    GridSearch {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, value_name = "PATH")]
        reference: Option<PathBuf>,
    },
    /// Recompute per-run metrics from the per-step CSVs of finished runs
    Metrics {
        /// Output directories of `run`
        #[arg(value_name = "RUN_DIR")]
        dirs: Vec<PathBuf>,
    },
    /// Merge run summaries into one table
    Report {
        /// Output directories of `run`
        #[arg(value_name = "RUN_DIR")]
        dirs: Vec<PathBuf>,
    },
    /// Render an SVG figure from one run directory
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    L63,
    L96,
}

impl From<SystemArg> for SystemKind {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::L63 => SystemKind::L63,
            SystemArg::L96 => SystemKind::L96,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterArg {
    Diffusion,
    Enkf,
    Sir,
}

impl From<FilterArg> for FilterKind {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Diffusion => FilterKind::Diffusion,
            FilterArg::Enkf => FilterKind::Enkf,
            FilterArg::Sir => FilterKind::Sir,
        }
    }
}

/// Settings shared by the commands that simulate.
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// TOML experiment configuration; flags override its values
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Preset used when no --config is given
    #[arg(long, value_enum)]
    pub system: Option<SystemArg>,

    /// State dimension (Lorenz-96)
    #[arg(long, value_name = "D")]
    pub dim: Option<usize>,

    /// Filters to run (repeat or comma-separate)
    #[arg(long, value_enum, value_delimiter = ',')]
    pub filter: Vec<FilterArg>,

    /// Ensemble sizes (repeat or comma-separate); particle count for `reference`
    #[arg(long = "n", value_name = "N", value_delimiter = ',')]
    pub n: Vec<usize>,

    /// Number of simulations
    #[arg(long, value_name = "S")]
    pub sims: Option<usize>,

    /// Assimilation steps
    #[arg(long, value_name = "K")]
    pub steps: Option<usize>,

    /// Kernel bandwidth in state space
    #[arg(long, value_name = "F")]
    pub sigma_x: Option<f64>,

    /// Kernel bandwidth in observation space
    #[arg(long, value_name = "F")]
    pub sigma_y: Option<f64>,

    /// Largest noise level of the diffusion schedule
    #[arg(long, value_name = "F")]
    pub sigma_max: Option<f64>,

    /// Write prior and posterior ensembles of every step
    #[arg(long)]
    pub store_ensembles: bool,

    /// Reference atoms used for W2 scoring
    #[arg(long, value_name = "M")]
    pub subsample: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Per-step density of one coordinate
    Density,
    /// Ensemble mean, spread, truth and observations of one coordinate
    Timeseries,
    /// Prior and posterior particles at one step in a 2-D plane
    Scatter,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// A run directory, e.g. runs/diffusion-n100-s000
    #[arg(value_name = "RUN")]
    pub run: PathBuf,

    #[arg(long, value_enum)]
    pub kind: PlotKind,

    /// State coordinate (0-based)
    #[arg(long, default_value_t = 0)]
    pub coordinate: usize,

    /// Step range FIRST:LAST (inclusive); defaults to the whole run
    #[arg(long, value_name = "FIRST:LAST")]
    pub range: Option<String>,

    /// Step shown by the scatter plot
    #[arg(long, value_name = "K")]
    pub step: Option<usize>,

    /// State plane I,J of the scatter plot
    #[arg(long, value_name = "I,J", default_value = "0,2")]
    pub plane: String,
}
