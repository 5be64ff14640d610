//! Self-contained SVG figures. Output depends only on the run files, so equal
//! inputs give byte-identical documents.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use diffusim::experiment::{
    load_record, load_snapshot, load_stored_ensemble, Stage, StepsTable, SystemKind,
};
use diffusim::metrics::density_grid;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
const DENSITY_BINS: usize = 80;

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo > 1e-9 {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

fn bounds(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}

struct Canvas {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    comments: Vec<String>,
}

impl Canvas {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            x,
            y,
            body: String::new(),
            comments: Vec::new(),
        }
    }

    fn sx(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn sy(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn comment(&mut self, text: String) {
        // "--" may not appear inside an XML comment.
        self.comments.push(text.replace("--", "- -"));
    }

    fn axes(&mut self, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="1"/>"#,
            px(x0),
            px(y0),
            px(x1 - x0),
            px(y1 - y0)
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = self.x.0 + t * (self.x.1 - self.x.0);
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let (xp, yp) = (self.sx(xv), self.sy(yv));
            let _ = writeln!(
                s,
                r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#,
                px(xp),
                px(y1),
                px(y1 + 4.0)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                px(xp),
                px(y1 + 17.0),
                label(xv)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>"#,
                px(x0 - 4.0),
                px(yp),
                px(x0)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                px(x0 - 7.0),
                px(yp + 4.0),
                label(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
            px(0.5 * (x0 + x1)),
            px(HEIGHT - 10.0)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{ylabel}</text>"#,
            px(0.5 * (y0 + y1))
        );
        self.body.push_str(&s);
    }

    fn finish(self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{1}" viewBox="0 0 {0} {1}" font-family="sans-serif" font-size="11">"#,
            WIDTH, HEIGHT
        );
        for c in &self.comments {
            let _ = writeln!(out, "<!-- {c} -->");
        }
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="13">{title}</text>"#,
            px(WIDTH / 2.0)
        );
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

fn run_id(run: &Path) -> String {
    run.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| run.display().to_string())
}

fn step_count(run: &Path) -> Result<usize> {
    Ok(load_record(run)
        .with_context(|| format!("{} is not a run directory", run.display()))?
        .steps
        .len())
}

fn resolve_range(
    range: Option<(usize, usize)>,
    first: usize,
    last: usize,
) -> Result<(usize, usize)> {
    let (a, b) = range.unwrap_or((first, last));
    if a > b || a < first || b > last {
        bail!(crate::Usage(format!(
            "step range {a}:{b} is outside {first}:{last}"
        )));
    }
    Ok((a, b))
}

/// Per-step density of one coordinate of the analysis ensembles; each step
/// column is scaled to unit maximum.
pub fn density(run: &Path, coordinate: usize, range: Option<(usize, usize)>) -> Result<String> {
    let k_max = step_count(run)?;
    let (a, b) = resolve_range(range, 0, k_max)?;
    let mut columns = Vec::new();
    for k in a..=b {
        let e = load_stored_ensemble(run, Stage::Posterior, k)?;
        if coordinate >= e.dim() {
            bail!(crate::Usage(format!(
                "coordinate {coordinate} out of range for dimension {}",
                e.dim()
            )));
        }
        columns.push(e.column(coordinate));
    }
    let (lo, hi) = padded_bounds(&columns);
    let edges: Vec<f64> = (0..=DENSITY_BINS)
        .map(|i| lo + (hi - lo) * i as f64 / DENSITY_BINS as f64)
        .collect();
    let grid = density_grid(&columns, &edges)?;

    let mut c = Canvas::new((a as f64 - 0.5, b as f64 + 0.5), (lo, hi));
    c.comment(format!(
        "diffusim plot kind=density run={} coordinate={coordinate} steps={a}:{b}",
        run_id(run)
    ));
    c.comment(format!(
        "bins={DENSITY_BINS} lo={lo} hi={hi} normalization=column-max"
    ));
    let cell_w = c.sx(1.0) - c.sx(0.0);
    let cell_h = c.sy(edges[0]) - c.sy(edges[1]);
    let mut rects = String::new();
    for (col, k) in grid.iter().zip(a..=b) {
        let peak = col
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map_or(0, |(i, _)| i);
        c.comment(format!(
            "step k={k} peak_bin={peak} peak_centre={}",
            0.5 * (edges[peak] + edges[peak + 1])
        ));
        for (bin, &v) in col.iter().enumerate() {
            if v < 0.005 {
                continue;
            }
            let shade = |full: f64| (255.0 + v * (full - 255.0)).round() as u8;
            let _ = writeln!(
                rects,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="rgb({},{},{})"/>"#,
                px(c.sx(k as f64 - 0.5)),
                px(c.sy(edges[bin + 1])),
                px(cell_w),
                px(cell_h),
                shade(8.0),
                shade(48.0),
                shade(107.0)
            );
        }
    }
    c.body.push_str(&rects);
    c.axes("step k", &format!("x{}", coordinate + 1));
    Ok(c.finish(&format!(
        "Posterior density of x{} ({})",
        coordinate + 1,
        run_id(run)
    )))
}

fn padded_bounds(columns: &[Vec<f64>]) -> (f64, f64) {
    let (lo, hi) = bounds(columns.iter().flatten().copied()).unwrap_or((0.0, 0.0));
    padded(lo, hi)
}

/// Index of the observation that measures `coordinate` directly, if any.
fn observed_component(run: &Path, coordinate: usize) -> Option<usize> {
    let snapshot = load_snapshot(run.parent()?.parent()?).ok()?;
    match snapshot.system {
        SystemKind::L63 if coordinate == 2 => Some(0),
        _ => None,
    }
}

/// Ensemble mean with a band of one standard deviation either side, the
/// truth as a dashed line and, where observed directly, the observations.
pub fn timeseries(run: &Path, coordinate: usize, range: Option<(usize, usize)>) -> Result<String> {
    let table = StepsTable::load(&run.join("steps.csv"))?;
    let col = |name: String| {
        table.column(&name).ok_or_else(|| {
            anyhow::Error::new(crate::Usage(format!("steps.csv has no column {name}")))
        })
    };
    let ks: Vec<usize> = col("k".into())?
        .iter()
        .map(|v| v.unwrap_or(0.0) as usize)
        .collect();
    let mean = col(format!("mean_{coordinate}"))?;
    let std = col(format!("std_{coordinate}"))?;
    let truth = col(format!("truth_{coordinate}"))?;
    let obs = observed_component(run, coordinate).and_then(|j| table.column(&format!("obs_{j}")));
    let (a, b) = resolve_range(
        range,
        ks.first().copied().unwrap_or(0),
        ks.last().copied().unwrap_or(0),
    )?;
    let rows: Vec<usize> = (0..ks.len())
        .filter(|&i| ks[i] >= a && ks[i] <= b)
        .collect();

    let mut values = Vec::new();
    for &i in &rows {
        if let (Some(m), Some(s)) = (mean[i], std[i]) {
            values.extend([m - s, m + s]);
        }
        values.extend(truth[i]);
        if let Some(o) = &obs {
            values.extend(o[i]);
        }
    }
    let (lo, hi) = bounds(values).map_or((-1.0, 1.0), |(l, h)| padded(l, h));
    let x_range = if a == b {
        (a as f64 - 0.5, b as f64 + 0.5)
    } else {
        (a as f64, b as f64)
    };
    let mut c = Canvas::new(x_range, (lo, hi));
    c.comment(format!(
        "diffusim plot kind=timeseries run={} coordinate={coordinate} steps={a}:{b}",
        run_id(run)
    ));
    c.comment("columns k,mean,std,lower,upper,truth,obs".into());
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for &i in &rows {
        let (lower, upper) = match (mean[i], std[i]) {
            (Some(m), Some(s)) => (Some(m - s), Some(m + s)),
            _ => (None, None),
        };
        c.comment(format!(
            "row {},{},{},{},{},{},{}",
            ks[i],
            opt(mean[i]),
            opt(std[i]),
            opt(lower),
            opt(upper),
            opt(truth[i]),
            opt(obs.as_ref().and_then(|o| o[i]))
        ));
    }

    let mut band_top = Vec::new();
    let mut band_bottom = Vec::new();
    let mut mean_line = Vec::new();
    let mut truth_line = Vec::new();
    let mut markers = String::new();
    for &i in &rows {
        let x = c.sx(ks[i] as f64);
        if let (Some(m), Some(s)) = (mean[i], std[i]) {
            band_top.push(format!("{},{}", px(x), px(c.sy(m + s))));
            band_bottom.push(format!("{},{}", px(x), px(c.sy(m - s))));
            mean_line.push(format!("{},{}", px(x), px(c.sy(m))));
        }
        if let Some(t) = truth[i] {
            truth_line.push(format!("{},{}", px(x), px(c.sy(t))));
        }
        if let Some(y) = obs.as_ref().and_then(|o| o[i]) {
            let _ = writeln!(
                markers,
                r#"<circle cx="{}" cy="{}" r="2.5" fill="none" stroke="rgb(200,30,30)"/>"#,
                px(x),
                px(c.sy(y))
            );
        }
    }
    band_bottom.reverse();
    let mut s = String::new();
    if !band_top.is_empty() {
        let _ = writeln!(
            s,
            r#"<polygon id="band" points="{} {}" fill="rgb(120,160,220)" fill-opacity="0.35" stroke="none"/>"#,
            band_top.join(" "),
            band_bottom.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<polyline id="mean" points="{}" fill="none" stroke="rgb(20,60,160)" stroke-width="1.5"/>"#,
            mean_line.join(" ")
        );
    }
    if !truth_line.is_empty() {
        let _ = writeln!(
            s,
            r#"<polyline id="truth" points="{}" fill="none" stroke="black" stroke-width="1.2" stroke-dasharray="5,3"/>"#,
            truth_line.join(" ")
        );
    }
    s.push_str(&markers);
    c.body.push_str(&s);
    c.axes("step k", &format!("x{}", coordinate + 1));
    Ok(c.finish(&format!(
        "Ensemble mean and spread of x{} ({})",
        coordinate + 1,
        run_id(run)
    )))
}

/// Forecast and analysis particles at step `k` in the plane of coordinates
/// `plane`.
pub fn scatter(run: &Path, k: usize, plane: (usize, usize)) -> Result<String> {
    let k_max = step_count(run)?;
    if k < 1 || k > k_max {
        bail!(crate::Usage(format!(
            "scatter step {k} is outside 1:{k_max}"
        )));
    }
    let prior = load_stored_ensemble(run, Stage::Prior, k)?;
    let posterior = load_stored_ensemble(run, Stage::Posterior, k)?;
    let (i, j) = plane;
    if i >= prior.dim() || j >= prior.dim() || i == j {
        bail!(crate::Usage(format!(
            "plane {i},{j} is invalid for dimension {}",
            prior.dim()
        )));
    }
    let pts =
        |e: &diffusim::Ensemble| -> Vec<(f64, f64)> { e.rows().map(|r| (r[i], r[j])).collect() };
    let (a, b) = (pts(&prior), pts(&posterior));
    let xs = bounds(a.iter().chain(&b).map(|p| p.0)).unwrap_or((0.0, 0.0));
    let ys = bounds(a.iter().chain(&b).map(|p| p.1)).unwrap_or((0.0, 0.0));
    let mut c = Canvas::new(padded(xs.0, xs.1), padded(ys.0, ys.1));
    c.comment(format!(
        "diffusim plot kind=scatter run={} step={k} plane={i},{j}",
        run_id(run)
    ));
    let mean = |p: &[(f64, f64)]| {
        let n = p.len().max(1) as f64;
        (
            p.iter().map(|q| q.0).sum::<f64>() / n,
            p.iter().map(|q| q.1).sum::<f64>() / n,
        )
    };
    for (name, p) in [("prior", &a), ("posterior", &b)] {
        let m = mean(p);
        c.comment(format!("{name} n={} mean={},{}", p.len(), m.0, m.1));
    }
    let mut s = String::new();
    for (id, p, colour) in [
        ("prior", &a, "rgb(230,140,30)"),
        ("posterior", &b, "rgb(30,80,180)"),
    ] {
        let _ = writeln!(s, r#"<g id="{id}" fill="{colour}" fill-opacity="0.6">"#);
        for q in p.iter() {
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="1.8"/>"#,
                px(c.sx(q.0)),
                px(c.sy(q.1))
            );
        }
        s.push_str("</g>\n");
    }
    let lx = WIDTH - RIGHT - 110.0;
    let _ = writeln!(
        s,
        r#"<circle cx="{}" cy="{}" r="4" fill="rgb(230,140,30)"/>"#,
        px(lx),
        px(TOP + 14.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">predicted</text>"#,
        px(lx + 10.0),
        px(TOP + 18.0)
    );
    let _ = writeln!(
        s,
        r#"<circle cx="{}" cy="{}" r="4" fill="rgb(30,80,180)"/>"#,
        px(lx),
        px(TOP + 30.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">updated</text>"#,
        px(lx + 10.0),
        px(TOP + 34.0)
    );
    c.body.push_str(&s);
    c.axes(&format!("x{}", i + 1), &format!("x{}", j + 1));
    Ok(c.finish(&format!(
        "Predicted and updated states at step {k} ({})",
        run_id(run)
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_compact() {
        assert_eq!(label(0.25), "0.25");
        assert_eq!(label(3.0), "3");
        assert_eq!(label(-0.0001), "0");
        assert_eq!(label(-12.5), "-12.5");
    }

    #[test]
    fn degenerate_bounds_are_widened() {
        assert_eq!(padded(2.0, 2.0), (1.0, 3.0));
        let (lo, hi) = padded(0.0, 10.0);
        assert!((lo + 0.5).abs() < 1e-12 && (hi - 10.5).abs() < 1e-12);
    }

    #[test]
    fn comments_never_contain_double_dash() {
        let mut c = Canvas::new((0.0, 1.0), (0.0, 1.0));
        c.comment("a--b".into());
        assert!(!c.finish("t").contains("a--b"));
    }
}
