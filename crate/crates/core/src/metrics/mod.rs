//! Evaluation metrics: exact Wasserstein-2 between empirical measures,
//! ensemble-mean RMSE, display densities and a two-component mixture fit.

mod network_simplex;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, StateEnsemble};
use crate::error::{ensure_dim, Error, Result};
use crate::kernels::squared_distance;

/// Weighted point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    support: Ensemble,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(support: Ensemble, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Argument(
                "empirical measure needs at least one atom".into(),
            ));
        }
        ensure_dim(support.len(), weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Argument(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        // Summation error grows with the number of atoms.
        let tol = 1e-12 + weights.len() as f64 * f64::EPSILON;
        if (total - 1.0).abs() > tol {
            return Err(Error::Argument(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        if !support.is_finite() {
            return Err(Error::Argument("support contains non-finite values".into()));
        }
        Ok(Self { support, weights })
    }

    pub fn uniform(support: Ensemble) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::Argument(
                "empirical measure needs at least one atom".into(),
            ));
        }
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn from_ensemble(ensemble: &StateEnsemble) -> Self {
        let n = ensemble.len();
        Self {
            support: ensemble.members.clone(),
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn support(&self) -> &Ensemble {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| x == w)
    }
}

/// Sparse optimal coupling between two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub n: usize,
    pub m: usize,
    /// Non-zero entries `(i, j, mass)` sorted by `(i, j)`.
    pub entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.m];
        for &(i, j, w) in &self.entries {
            out[i * self.m + j] += w;
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, _, w) in &self.entries {
            out[i] += w;
        }
        out
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for &(_, j, w) in &self.entries {
            out[j] += w;
        }
        out
    }

    /// Transport cost under the squared Euclidean ground cost.
    pub fn cost(&self, a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, w)| w * squared_distance(a.support.row(i), b.support.row(j)))
            .sum()
    }
}

/// Exact optimal coupling for the squared Euclidean cost.
pub fn optimal_transport(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<TransportPlan> {
    ensure_dim(a.dim(), b.dim())?;
    let (n, m) = (a.len(), b.len());
    let cost = |i: usize, j: usize| squared_distance(a.support.row(i), b.support.row(j));
    let entries = if a.is_uniform() && b.is_uniform() {
        // Integer masses keep the pivots exact.
        let scale = 1.0 / (n as f64 * m as f64);
        network_simplex::solve_transport(&vec![m as f64; n], &vec![n as f64; m], cost)?
            .into_iter()
            .map(|(i, j, w)| (i, j, w * scale))
            .collect()
    } else {
        let mut demand = b.weights.clone();
        let gap: f64 = a.weights.iter().sum::<f64>() - demand.iter().sum::<f64>();
        let last = demand.len() - 1;
        demand[last] = (demand[last] + gap).max(0.0);
        network_simplex::solve_transport(&a.weights, &demand, cost)?
    };
    Ok(TransportPlan { n, m, entries })
}

pub fn wasserstein2(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64> {
    let plan = optimal_transport(a, b)?;
    Ok(plan.cost(a, b).max(0.0).sqrt())
}

/// Per-step W2 between a filter run and reference measures.
pub fn w2_series(run: &[StateEnsemble], reference: &[EmpiricalMeasure]) -> Result<Vec<f64>> {
    if run.len() != reference.len() {
        return Err(Error::Argument(format!(
            "run has {} steps but reference has {}",
            run.len(),
            reference.len()
        )));
    }
    run.par_iter()
        .zip(reference.par_iter())
        .map(|(e, r)| wasserstein2(&EmpiricalMeasure::from_ensemble(e), r))
        .collect()
}

pub fn averaged_w2(run: &[StateEnsemble], reference: &[EmpiricalMeasure]) -> Result<f64> {
    let series = w2_series(run, reference)?;
    mean_of(&series)
}

/// `‖x* − x̄‖₂ / √d` for one step.
pub fn rmse(ensemble: &StateEnsemble, truth: &[f64]) -> Result<f64> {
    ensure_dim(ensemble.dim(), truth.len())?;
    let mean = ensemble.members.mean();
    Ok((squared_distance(&mean, truth) / truth.len() as f64).sqrt())
}

pub fn averaged_rmse<T: AsRef<[f64]>>(run: &[StateEnsemble], truth: &[T]) -> Result<f64> {
    if run.len() != truth.len() {
        return Err(Error::Argument(format!(
            "run has {} steps but truth has {}",
            run.len(),
            truth.len()
        )));
    }
    let series = run
        .iter()
        .zip(truth)
        .map(|(e, t)| rmse(e, t.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    mean_of(&series)
}

fn mean_of(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("cannot average zero steps".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Uniform draw of `m` atoms without replacement, reweighted uniformly.
pub fn subsample_reference(
    reference: &EmpiricalMeasure,
    m: usize,
    rng: &mut dyn RngCore,
) -> Result<EmpiricalMeasure> {
    if m == 0 || m > reference.len() {
        return Err(Error::Argument(format!(
            "subsample size {m} outside 1..={}",
            reference.len()
        )));
    }
    let idx = rand::seq::index::sample(rng, reference.len(), m).into_vec();
    EmpiricalMeasure::uniform(reference.support.select(&idx))
}

/// Silverman's rule of thumb, `None` when the sample has no spread.
pub fn silverman_bandwidth(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = match (var.sqrt(), iqr / 1.34) {
        (s, q) if s > 0.0 && q > 0.0 => s.min(q),
        (s, q) => s.max(q),
    };
    (spread > 0.0).then(|| 0.9 * spread * (n as f64).powf(-0.2))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Gaussian KDE of `values` with bandwidth `h`, evaluated at `points`.
pub fn kde_1d(values: &[f64], h: f64, points: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    points
        .iter()
        .map(|&p| {
            norm * values
                .iter()
                .map(|&v| (-0.5 * ((p - v) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect()
}

/// Per-step KDE of one coordinate on the centres of `edges`, each row scaled
/// to unit maximum. Samples without spread use the narrowest bin width.
pub fn density_grid<T: AsRef<[f64]>>(
    values_over_steps: &[T],
    edges: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if edges.len() < 2 {
        return Err(Error::Argument(
            "density grid needs at least two bin edges".into(),
        ));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::Argument(
            "bin edges must be finite and strictly increasing".into(),
        ));
    }
    let centres: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let min_width = edges
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    values_over_steps
        .iter()
        .map(|row| {
            let values = row.as_ref();
            if values.is_empty() {
                return Ok(vec![0.0; centres.len()]);
            }
            let h = silverman_bandwidth(values).unwrap_or(min_width);
            let mut dens = kde_1d(values, h, &centres);
            let peak = dens.iter().cloned().fold(0.0, f64::max);
            if peak > 0.0 {
                dens.iter_mut().for_each(|d| *d /= peak);
            }
            Ok(dens)
        })
        .collect()
}

/// Two-component Gaussian mixture in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoComponentFit {
    pub weights: [f64; 2],
    pub means: [[f64; 2]; 2],
    /// Covariances as `(xx, xy, yy)`.
    pub covariances: [[f64; 3]; 2],
    pub log_likelihood: f64,
}

impl TwoComponentFit {
    pub fn min_weight(&self) -> f64 {
        self.weights[0].min(self.weights[1])
    }

    /// Separation of the component means along the first axis.
    pub fn separation(&self) -> f64 {
        (self.means[0][0] - self.means[1][0]).abs()
    }

    /// Both components hold at least `min_weight` and sit more than
    /// `min_separation` apart along the first axis.
    pub fn is_bimodal(&self, min_weight: f64, min_separation: f64) -> bool {
        self.min_weight() >= min_weight && self.separation() > min_separation
    }

    /// Scalar used to pick the most bimodal step.
    pub fn bimodality(&self) -> f64 {
        self.min_weight() * self.separation()
    }
}

/// EM fit of a two-component mixture. Initialised deterministically by
/// splitting at the median of the first coordinate.
pub fn fit_two_component(points: &[[f64; 2]]) -> Result<TwoComponentFit> {
    let n = points.len();
    if n < 4 {
        return Err(Error::Argument(
            "mixture fit needs at least four points".into(),
        ));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    xs.sort_by(f64::total_cmp);
    let median = quantile(&xs, 0.5);
    let mut resp: Vec<f64> = points
        .iter()
        .map(|p| if p[0] <= median { 1.0 } else { 0.0 })
        .collect();
    if resp.iter().all(|&r| r == 1.0) {
        // All first coordinates equal: split by index instead.
        resp.iter_mut().skip(n / 2).for_each(|r| *r = 0.0);
    }

    let scale = {
        let mean = [0, 1].map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n as f64);
        let var =
            [0, 1].map(|k| points.iter().map(|p| (p[k] - mean[k]).powi(2)).sum::<f64>() / n as f64);
        var[0] + var[1]
    };
    let floor = 1e-6 * scale.max(1e-12);

    let mut fit = TwoComponentFit {
        weights: [0.5; 2],
        means: [[0.0; 2]; 2],
        covariances: [[1.0, 0.0, 1.0]; 2],
        log_likelihood: f64::NEG_INFINITY,
    };
    let mut previous = f64::NEG_INFINITY;
    for _ in 0..500 {
        // M step.
        for c in 0..2 {
            let r = |i: usize| if c == 0 { resp[i] } else { 1.0 - resp[i] };
            let total: f64 = (0..n).map(r).sum::<f64>().max(1e-300);
            let mu = [0, 1].map(|k| (0..n).map(|i| r(i) * points[i][k]).sum::<f64>() / total);
            let mut cov = [0.0; 3];
            for (i, p) in points.iter().enumerate() {
                let (dx, dy) = (p[0] - mu[0], p[1] - mu[1]);
                cov[0] += r(i) * dx * dx;
                cov[1] += r(i) * dx * dy;
                cov[2] += r(i) * dy * dy;
            }
            cov.iter_mut().for_each(|v| *v /= total);
            cov[0] += floor;
            cov[2] += floor;
            fit.weights[c] = total / n as f64;
            fit.means[c] = mu;
            fit.covariances[c] = cov;
        }
        // E step.
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            let l = [0, 1].map(|c| {
                fit.weights[c].max(1e-300).ln()
                    + gaussian2_log_pdf(p, &fit.means[c], &fit.covariances[c])
            });
            let top = l[0].max(l[1]);
            let lse = top + ((l[0] - top).exp() + (l[1] - top).exp()).ln();
            resp[i] = (l[0] - lse).exp();
            ll += lse;
        }
        fit.log_likelihood = ll;
        if (ll - previous).abs() <= 1e-10 * ll.abs().max(1.0) {
            break;
        }
        previous = ll;
    }
    Ok(fit)
}

fn gaussian2_log_pdf(p: &[f64; 2], mu: &[f64; 2], cov: &[f64; 3]) -> f64 {
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    let (dx, dy) = (p[0] - mu[0], p[1] - mu[1]);
    let q = (cov[2] * dx * dx - 2.0 * cov[1] * dx * dy + cov[0] * dy * dy) / det;
    -0.5 * q - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
}
