//! On-disk layout of run records.
//!
//! ```text
//! <out>/config.snapshot        effective configuration (TOML)
//! <out>/summary.json           per-cell metrics, deterministic
//! <out>/summary.csv, .txt      table renderings
//! <out>/failures.json          failed runs with step and message
//! <out>/timings.json           wall-clock seconds per run
//! <out>/runs/<filter>-n<N>-s<SSS>/record.json
//! <out>/runs/<filter>-n<N>-s<SSS>/steps.csv
//! <out>/runs/<filter>-n<N>-s<SSS>/ensembles/{prior,posterior}_<KKKK>.bin
//! ```
//!
//! Ensemble dumps start with a 32-byte header (8-byte magic, `u32` version,
//! `u32` reserved, `u64` N, `u64` d) followed by N·d little-endian `f64`
//! values in row-major order.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::run::RunRecord;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};

pub const ENSEMBLE_MAGIC: [u8; 8] = *b"DFSMENSB";
pub const ENSEMBLE_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

pub fn write_ensemble(path: &Path, ensemble: &Ensemble) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * ensemble.as_slice().len());
    buf.extend_from_slice(&ENSEMBLE_MAGIC);
    buf.extend_from_slice(&ENSEMBLE_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    buf.extend_from_slice(&(ensemble.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(ensemble.dim() as u64).to_le_bytes());
    for v in ensemble.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_ensemble(path: &Path) -> Result<Ensemble> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!(
            "file is {} bytes, shorter than the header",
            bytes.len()
        )));
    }
    if bytes[..8] != ENSEMBLE_MAGIC {
        return Err(bad("not an ensemble dump (bad magic)".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let version = u32_at(8);
    if version != ENSEMBLE_VERSION {
        return Err(bad(format!("unsupported ensemble dump version {version}")));
    }
    let n = u64_at(16) as usize;
    let d = u64_at(24) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .map(|c| c + HEADER_LEN);
    if expected != Some(bytes.len()) {
        return Err(bad(format!("payload size does not match N = {n}, d = {d}")));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ensemble::from_vec(n, d, data).map_err(|e| bad(e.to_string()))
}

pub fn run_dir_name(record: &RunRecord) -> String {
    format!("{}-n{}-s{:03}", record.filter, record.n, record.simulation)
}

fn push_row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-step CSV. Row `k = 0` carries the initial ensemble and no
/// observation. Floats use the shortest round-trip representation.
pub fn steps_csv(record: &RunRecord) -> String {
    let d = record.initial_mean.len();
    let obs_d = record.steps.first().map_or(0, |s| s.observation.len());
    let mut header = vec!["k".to_string()];
    header.extend((0..obs_d).map(|a| format!("obs_{a}")));
    header.extend((0..d).map(|a| format!("truth_{a}")));
    header.extend((0..d).map(|a| format!("mean_{a}")));
    header.extend((0..d).map(|a| format!("std_{a}")));
    header.extend(["step_count_min", "step_count_max", "metric"].map(String::from));
    let mut out = String::new();
    push_row(&mut out, &header);

    let mut row = vec!["0".to_string()];
    row.extend(std::iter::repeat_n(String::new(), obs_d + d));
    row.extend(record.initial_mean.iter().map(f64::to_string));
    row.extend(record.initial_std.iter().map(f64::to_string));
    row.extend([String::new(), String::new(), String::new()]);
    push_row(&mut out, &row);

    for s in &record.steps {
        let mut row = vec![s.k.to_string()];
        row.extend(s.observation.iter().map(f64::to_string));
        row.extend(s.truth.iter().map(f64::to_string));
        row.extend(s.mean.iter().map(f64::to_string));
        row.extend(s.std.iter().map(f64::to_string));
        row.push(
            s.solver_steps
                .map(|c| c.min.to_string())
                .unwrap_or_default(),
        );
        row.push(
            s.solver_steps
                .map(|c| c.max.to_string())
                .unwrap_or_default(),
        );
        row.push(fmt_opt(s.metric));
        push_row(&mut out, &row);
    }
    out
}

/// Columns of a steps CSV, keyed by header name.
#[derive(Debug, Clone)]
pub struct StepsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl StepsTable {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| bad(1, "empty file".into()))?
            .split(',')
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(bad(
                    i + 2,
                    format!("expected {} fields, found {}", header.len(), cells.len()),
                ));
            }
            let row = cells
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>()
                            .map(Some)
                            .map_err(|e| bad(i + 2, format!("{c:?}: {e}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(path, &std::fs::read_to_string(path)?)
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Columns named `prefix_0, prefix_1, ...` as per-row vectors.
    pub fn vector(&self, prefix: &str) -> Vec<Vec<Option<f64>>> {
        let idx: Vec<usize> = (0..)
            .map_while(|a| {
                self.header
                    .iter()
                    .position(|h| *h == format!("{prefix}_{a}"))
            })
            .collect();
        self.rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i]).collect())
            .collect()
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Config(e.to_string()))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, json(value)?)?;
    Ok(())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `record.json`, `steps.csv` and any stored ensembles under
/// `runs_dir`; returns the run directory.
pub fn save_record(runs_dir: &Path, record: &RunRecord) -> Result<PathBuf> {
    let dir = runs_dir.join(run_dir_name(record));
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("record.json"), record)?;
    std::fs::write(dir.join("steps.csv"), steps_csv(record))?;
    if let (Some(priors), Some(posteriors)) = (&record.priors, &record.posteriors) {
        let ens = dir.join("ensembles");
        std::fs::create_dir_all(&ens)?;
        for (idx, e) in priors.iter().enumerate() {
            write_ensemble(&ens.join(format!("prior_{:04}.bin", idx + 1)), e)?;
        }
        for (k, e) in posteriors.iter().enumerate() {
            write_ensemble(&ens.join(format!("posterior_{k:04}.bin")), e)?;
        }
    }
    Ok(dir)
}

pub fn load_record(run_dir: &Path) -> Result<RunRecord> {
    read_json(&run_dir.join("record.json"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prior,
    Posterior,
}

/// Path of a stored ensemble; errors tell the user how to produce one.
pub fn ensemble_path(run_dir: &Path, stage: Stage, k: usize) -> Result<PathBuf> {
    let name = match stage {
        Stage::Prior => format!("prior_{k:04}.bin"),
        Stage::Posterior => format!("posterior_{k:04}.bin"),
    };
    let path = run_dir.join("ensembles").join(name);
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Config(format!(
            "{} has no stored ensembles for step {k}; rerun with --store-ensembles",
            run_dir.display()
        )))
    }
}

pub fn load_stored_ensemble(run_dir: &Path, stage: Stage, k: usize) -> Result<Ensemble> {
    read_ensemble(&ensemble_path(run_dir, stage, k)?)
}

/// `name = seconds` lines sorted by run name.
pub fn timings_json(records: &[RunRecord]) -> Result<String> {
    let mut map = serde_json::Map::new();
    for r in records {
        map.insert(run_dir_name(r), serde_json::Value::from(r.elapsed_seconds));
    }
    json(&map)
}

pub(crate) fn config_header(text: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# diffusim {} effective configuration",
        env!("CARGO_PKG_VERSION")
    );
    out.push_str(text);
    out
}
