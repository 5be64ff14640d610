//! Row-major sample matrices: one row per ensemble member.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// `n x dim` matrix of samples stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Ensemble {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            data: vec![0.0; n * dim],
            n,
            dim,
        }
    }

    pub fn from_vec(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("ensemble dimension must be >= 1".into()));
        }
        ensure_dim(n * dim, data.len())?;
        Ok(Self { data, n, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::Argument("ensemble needs at least one row".into()))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            ensure_dim(dim, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::from_vec(rows.len(), dim, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Values of one coordinate across all members.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        let n = self.n as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Per-coordinate sample standard deviation (`1/(n-1)`); zeros when `n < 2`.
    pub fn std(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.dim];
        }
        let mean = self.mean();
        let mut var = vec![0.0; self.dim];
        for r in self.rows() {
            for ((acc, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let denom = (self.n - 1) as f64;
        var.into_iter().map(|v| (v / denom).sqrt()).collect()
    }

    /// Unbiased sample covariance, row-major `dim x dim`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let mean = self.mean();
        let mut cov = vec![0.0; d * d];
        for r in self.rows() {
            for a in 0..d {
                let da = r[a] - mean[a];
                for b in 0..d {
                    cov[a * d + b] += da * (r[b] - mean[b]);
                }
            }
        }
        let denom = (self.n.max(2) - 1) as f64;
        cov.iter_mut().for_each(|v| *v /= denom);
        cov
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            n: indices.len(),
            dim: self.dim,
        }
    }
}

/// Filtering-distribution samples at assimilation step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEnsemble {
    pub members: Ensemble,
    pub step: usize,
}

impl StateEnsemble {
    pub fn new(members: Ensemble, step: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Argument("state ensemble needs N >= 1".into()));
        }
        if !members.is_finite() {
            return Err(Error::Argument(
                "state ensemble contains non-finite entries".into(),
            ));
        }
        Ok(Self { members, step })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members.dim()
    }
}

/// Index-aligned `(state, synthetic observation)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedEnsemble {
    pub states: Ensemble,
    pub observations: Ensemble,
}

impl PairedEnsemble {
    pub fn new(states: Ensemble, observations: Ensemble) -> Result<Self> {
        ensure_dim(states.len(), observations.len())?;
        if !states.is_finite() || !observations.is_finite() {
            return Err(Error::Argument(
                "paired ensemble contains non-finite entries".into(),
            ));
        }
        Ok(Self {
            states,
            observations,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}
