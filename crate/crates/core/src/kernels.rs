//! Isotropic Gaussian kernels `g_sigma(x) = N(x; 0, sigma^2 I_d)`.
//!
//! Everything downstream works with [`IsotropicGaussian::log_eval`]; the
//! linear-domain [`IsotropicGaussian::eval`] underflows for distances of a few
//! dozen bandwidths and is kept for checks and plotting.

use std::f64::consts::PI;

use crate::error::{ensure_dim, Error, Result};

const PAIRWISE_CUTOFF: usize = 8;

/// Sum with pairwise (cascade) reduction above a small block size.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_CUTOFF {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// `||a - b||^2`, reduced pairwise when the dimension exceeds 8.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= PAIRWISE_CUTOFF {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    } else {
        let mid = a.len() / 2;
        squared_distance(&a[..mid], &b[..mid]) + squared_distance(&a[mid..], &b[mid..])
    }
}

pub fn squared_norm(x: &[f64]) -> f64 {
    if x.len() <= PAIRWISE_CUTOFF {
        x.iter().map(|v| v * v).sum()
    } else {
        let mid = x.len() / 2;
        squared_norm(&x[..mid]) + squared_norm(&x[mid..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicGaussian {
    sigma: f64,
    dim: usize,
}

impl IsotropicGaussian {
    pub fn new(sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Argument(format!(
                "kernel bandwidth must be positive, got {sigma}"
            )));
        }
        if dim == 0 {
            return Err(Error::Argument("kernel dimension must be >= 1".into()));
        }
        Ok(Self { sigma, dim })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `-(d/2) log(2 pi sigma^2)`.
    pub fn log_normalizer(&self) -> f64 {
        -0.5 * self.dim as f64 * (2.0 * PI * self.sigma * self.sigma).ln()
    }

    /// Log-density given a precomputed squared norm.
    pub fn log_eval_sq(&self, sq_norm: f64) -> f64 {
        self.log_normalizer() - sq_norm / (2.0 * self.sigma * self.sigma)
    }

    pub fn log_eval(&self, x: &[f64]) -> Result<f64> {
        ensure_dim(self.dim, x.len())?;
        Ok(self.log_eval_sq(squared_norm(x)))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        ensure_dim(self.dim, x.len())?;
        let norm = (2.0 * PI * self.sigma * self.sigma).powf(-0.5 * self.dim as f64);
        Ok(norm * (-squared_norm(x) / (2.0 * self.sigma * self.sigma)).exp())
    }

    /// `grad g(x) = g(x) * (-x / sigma^2)`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.eval(x)?;
        let s2 = self.sigma * self.sigma;
        Ok(x.iter().map(|v| g * (-v / s2)).collect())
    }
}

/// Bandwidth of `g_a * g_b`, i.e. `sqrt(a^2 + b^2)`.
pub fn convolved_sigma(sigma_a: f64, sigma_b: f64) -> Result<f64> {
    if !(sigma_a > 0.0) || !(sigma_b > 0.0) {
        return Err(Error::Argument(format!(
            "convolved bandwidths must be positive, got ({sigma_a}, {sigma_b})"
        )));
    }
    Ok(sigma_a.hypot(sigma_b))
}
