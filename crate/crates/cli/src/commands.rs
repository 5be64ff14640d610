use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use diffusim::experiment::{
    configure_threads, grid_search, load_summary, run_experiment, simulate, write_experiment,
    ExperimentConfig, FilterKind, ReferenceSet, Report, StepsTable, Summary, SystemKind,
};

use crate::args::{Cli, Command, ExperimentArgs, PlotArgs, PlotKind};
use crate::{plot, Usage, EXIT_PARTIAL};

/// Largest tolerated gap between stored summaries and the per-step CSVs.
const CSV_TOLERANCE: f64 = 1e-9;

pub fn dispatch(cli: Cli) -> Result<u8> {
    configure_threads()?;
    let Cli { command, seed, out } = cli;
    match command {
        Command::Simulate(a) => cmd_simulate(&config_from(&a, seed)?, out),
        Command::Reference(a) => cmd_reference(&a, seed, out),
        Command::Run {
            experiment,
            reference,
        } => cmd_run(&config_from(&experiment, seed)?, reference, out),
        Command::GridSearch {
            experiment,
            reference,
        } => cmd_grid(&config_from(&experiment, seed)?, reference, out),
        Command::Metrics { dirs } => cmd_metrics(&dirs, out),
        Command::Report { dirs } => cmd_report(&dirs, out),
        Command::Plot(a) => cmd_plot(&a, out),
    }
}

/// Loads `--config` (or a preset) and applies the flag overrides.
pub fn config_from(a: &ExperimentArgs, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(path) => {
            if a.system.is_some() || a.dim.is_some() {
                bail!(Usage(
                    "--system and --dim cannot be combined with --config".into()
                ));
            }
            ExperimentConfig::load(path)?
        }
        None => ExperimentConfig::preset(a.system.map_or(SystemKind::L63, Into::into), a.dim)?,
    };
    if !a.filter.is_empty() {
        let mut filters: Vec<FilterKind> = Vec::new();
        for f in a.filter.iter().map(|&f| FilterKind::from(f)) {
            if !filters.contains(&f) {
                filters.push(f);
            }
        }
        c.filters = filters;
    }
    if !a.n.is_empty() {
        c.ensemble_sizes = a.n.clone();
    }
    if let Some(s) = a.sims {
        c.sims = s;
    }
    if let Some(k) = a.steps {
        c.steps = k;
    }
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(v) = a.sigma_max {
        c.diffusion.sigma_max = v;
    }
    c.set_bandwidths(a.sigma_x, a.sigma_y);
    c.store_ensembles |= a.store_ensembles;
    if let Some(m) = a.subsample {
        c.reference.subsample = m;
    }
    c.validate()?;
    Ok(c)
}

fn out_dir(out: Option<PathBuf>, config: &ExperimentConfig, default_leaf: Option<&str>) -> PathBuf {
    out.unwrap_or_else(|| match default_leaf {
        Some(leaf) => config.output_dir.join(leaf),
        None => config.output_dir.clone(),
    })
}

fn load_reference(
    path: Option<PathBuf>,
    config: &ExperimentConfig,
) -> Result<Option<ReferenceSet>> {
    let Some(path) = path else { return Ok(None) };
    let set = ReferenceSet::load(&path)
        .with_context(|| format!("loading reference {}", path.display()))?;
    set.check_compatible(config)?;
    Ok(Some(set))
}

fn vector_csv(header: &str, dim: usize, rows: &[(usize, &[f64])]) -> String {
    let mut out = String::from("k");
    for a in 0..dim {
        let _ = write!(out, ",{header}_{a}");
    }
    out.push('\n');
    for (k, v) in rows {
        let _ = write!(out, "{k}");
        for x in *v {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

fn cmd_simulate(config: &ExperimentConfig, out: Option<PathBuf>) -> Result<u8> {
    let dir = out_dir(out, config, Some("simulations"));
    let model = config.model()?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.snapshot"), config.snapshot()?)?;
    for s in 0..config.sims {
        let sim = simulate(config, &model, s)?;
        let sub = dir.join(format!("sim_{s:03}"));
        std::fs::create_dir_all(&sub)?;
        let truth: Vec<(usize, &[f64])> = sim
            .truth
            .iter()
            .enumerate()
            .map(|(k, x)| (k, x.as_slice()))
            .collect();
        std::fs::write(sub.join("truth.csv"), vector_csv("x", config.dim, &truth))?;
        let obs: Vec<(usize, &[f64])> = sim
            .observations
            .iter()
            .enumerate()
            .map(|(i, y)| (i + 1, y.as_slice()))
            .collect();
        let obs_dim = sim.observations.first().map_or(0, Vec::len);
        std::fs::write(sub.join("observations.csv"), vector_csv("y", obs_dim, &obs))?;
    }
    println!("wrote {} simulations to {}", config.sims, dir.display());
    Ok(0)
}

fn cmd_reference(a: &ExperimentArgs, seed: Option<u64>, out: Option<PathBuf>) -> Result<u8> {
    let mut args = a.clone();
    let particles = match a.n.as_slice() {
        [] => None,
        [p] => Some(*p),
        _ => bail!(Usage(
            "reference takes a single --n (the particle count)".into()
        )),
    };
    args.n.clear();
    let mut config = config_from(&args, seed)?;
    if let Some(p) = particles {
        config.reference.particles = p;
        if a.subsample.is_none() {
            config.reference.subsample = config.reference.subsample.min(p);
        }
        config.validate()?;
    }
    let dir = out_dir(out, &config, Some("reference"));
    let set = ReferenceSet::build(&config)?;
    set.save(&dir)?;
    std::fs::write(dir.join("config.snapshot"), config.snapshot()?)?;
    println!(
        "wrote reference ({} particles, {} simulations, {} steps) to {}",
        config.reference.particles,
        config.sims,
        config.steps,
        dir.display()
    );
    Ok(0)
}

fn cmd_run(
    config: &ExperimentConfig,
    reference: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<u8> {
    let dir = out_dir(out, config, None);
    let stored = load_reference(reference, config)?;
    let experiment = run_experiment(config, stored.as_ref())?;
    write_experiment(&dir, config, &experiment)?;
    print!(
        "{}",
        Report::build(std::slice::from_ref(&experiment.summary))?.to_text()
    );
    println!("results in {}", dir.display());
    if experiment.all_completed() {
        Ok(0)
    } else {
        eprintln!(
            "{} of {} runs failed; see {}",
            experiment.failures.len(),
            experiment.records.len(),
            dir.join("failures.json").display()
        );
        Ok(EXIT_PARTIAL)
    }
}

fn cmd_grid(
    config: &ExperimentConfig,
    reference: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<u8> {
    let dir = out_dir(out, config, Some("grid"));
    let stored = load_reference(reference, config)?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.snapshot"), config.snapshot()?)?;
    for &n in &config.ensemble_sizes {
        let result = grid_search(config, n, stored.as_ref())?;
        std::fs::write(dir.join(format!("grid_n{n}.csv")), result.to_csv())?;
        let json = serde_json::to_string_pretty(&result)?;
        std::fs::write(dir.join(format!("grid_n{n}.json")), json + "\n")?;
        let best = result.best_cell();
        println!(
            "N = {n}: sigma_x = {}, sigma_y = {}, metric = {:.4}",
            best.sigma_x, best.sigma_y, best.metric
        );
        if !best.metric.is_finite() {
            eprintln!("warning: every grid cell failed for N = {n}");
        }
    }
    println!("results in {}", dir.display());
    Ok(0)
}

fn require_dirs(dirs: &[PathBuf]) -> Result<()> {
    if dirs.is_empty() {
        bail!(Usage("no run directories given".into()));
    }
    Ok(())
}

fn summary_of(dir: &Path) -> Result<Summary> {
    load_summary(dir).with_context(|| format!("{} is not a run output directory", dir.display()))
}

/// Time-averaged metric of one run from its steps.csv.
fn csv_metric(run_dir: &Path) -> Result<Option<f64>> {
    let table = StepsTable::load(&run_dir.join("steps.csv"))?;
    let Some(column) = table.column("metric") else {
        return Ok(None);
    };
    let values: Vec<f64> = column.iter().skip(1).flatten().copied().collect();
    Ok((!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64))
}

fn cmd_metrics(dirs: &[PathBuf], out: Option<PathBuf>) -> Result<u8> {
    require_dirs(dirs)?;
    let mut csv = String::from("dir,run,filter,n,simulation,stored,recomputed\n");
    let mut worst: f64 = 0.0;
    for dir in dirs {
        let summary = summary_of(dir)?;
        for cell in &summary.cells {
            for (s, (run, stored)) in cell.runs.iter().zip(&cell.values).enumerate() {
                let recomputed = csv_metric(&dir.join("runs").join(run))?;
                if let (Some(a), Some(b)) = (stored, recomputed) {
                    worst = worst.max((a - b).abs());
                }
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                let _ = writeln!(
                    csv,
                    "{},{run},{},{},{s},{},{}",
                    dir.display(),
                    cell.filter,
                    cell.n,
                    opt(*stored),
                    opt(recomputed)
                );
            }
        }
    }
    print!("{csv}");
    if let Some(out) = out {
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("metrics.csv"), &csv)?;
    }
    if worst > CSV_TOLERANCE {
        bail!("stored metrics differ from the per-step CSVs by {worst:e}");
    }
    Ok(0)
}

fn cmd_report(dirs: &[PathBuf], out: Option<PathBuf>) -> Result<u8> {
    require_dirs(dirs)?;
    let mut summaries = Vec::new();
    for dir in dirs {
        let summary = summary_of(dir)?;
        let gap = summary.verify_against_csv(&dir.join("runs"))?;
        if gap > CSV_TOLERANCE {
            bail!(
                "{}: summary differs from the per-step CSVs by {gap:e}",
                dir.display()
            );
        }
        summaries.push(summary);
    }
    let report = Report::build(&summaries)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = out {
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("report.csv"), report.to_csv())?;
        std::fs::write(out.join("report.txt"), &text)?;
    }
    Ok(0)
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let parsed = s
        .split_once(':')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
    parsed
        .ok_or_else(|| anyhow::Error::new(Usage(format!("--range expects FIRST:LAST, got {s:?}"))))
}

fn parse_plane(s: &str) -> Result<(usize, usize)> {
    let parsed = s
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
    parsed.ok_or_else(|| anyhow::Error::new(Usage(format!("--plane expects I,J, got {s:?}"))))
}

fn cmd_plot(a: &PlotArgs, out: Option<PathBuf>) -> Result<u8> {
    let range = a.range.as_deref().map(parse_range).transpose()?;
    let (svg, name) = match a.kind {
        PlotKind::Density => (
            plot::density(&a.run, a.coordinate, range)?,
            format!("density-x{}.svg", a.coordinate),
        ),
        PlotKind::Timeseries => (
            plot::timeseries(&a.run, a.coordinate, range)?,
            format!("timeseries-x{}.svg", a.coordinate),
        ),
        PlotKind::Scatter => {
            let Some(k) = a.step else {
                bail!(Usage("scatter plots need --step".into()))
            };
            let plane = parse_plane(&a.plane)?;
            (
                plot::scatter(&a.run, k, plane)?,
                format!("scatter-k{k}-x{}x{}.svg", plane.0, plane.1),
            )
        }
    };
    let dir = out.unwrap_or_else(|| a.run.join("plots"));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(name);
    std::fs::write(&path, svg)?;
    println!("wrote {}", path.display());
    Ok(0)
}
