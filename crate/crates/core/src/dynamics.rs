//! Lorenz-63 / Lorenz-96 vector fields, fixed-step propagators and the
//! benchmark observation operators.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::rng::add_gaussian;
use crate::ssm::DeterministicMap;

/// Autonomous right-hand side `du/dt = f(u)`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64], du: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lorenz63Params {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz63Params {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl VectorField for Lorenz63Params {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, u: &[f64], du: &mut [f64]) {
        du[0] = self.sigma * (u[1] - u[0]);
        du[1] = self.rho * u[0] - u[1] - u[0] * u[2];
        du[2] = u[0] * u[1] - self.beta * u[2];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lorenz96Params {
    pub forcing: f64,
    pub dim: usize,
}

impl Lorenz96Params {
    pub fn new(forcing: f64, dim: usize) -> Result<Self> {
        if dim < 4 {
            return Err(Error::Argument(format!(
                "Lorenz-96 needs dim >= 4, got {dim}"
            )));
        }
        if !forcing.is_finite() {
            return Err(Error::Argument("Lorenz-96 forcing must be finite".into()));
        }
        Ok(Self { forcing, dim })
    }
}

impl VectorField for Lorenz96Params {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, u: &[f64], du: &mut [f64]) {
        let d = u.len();
        for i in 0..d {
            let ip1 = if i + 1 == d { 0 } else { i + 1 };
            let im1 = if i == 0 { d - 1 } else { i - 1 };
            let im2 = (i + d - 2) % d;
            du[i] = (u[ip1] - u[im2]) * u[im1] - u[i] + self.forcing;
        }
    }
}

fn check_finite(u: &[f64]) -> Result<()> {
    if u.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Argument("state contains non-finite entries".into()))
    }
}

pub fn lorenz63_rhs(u: &[f64], params: &Lorenz63Params) -> Result<Vec<f64>> {
    ensure_dim(3, u.len())?;
    check_finite(u)?;
    let mut du = vec![0.0; 3];
    params.eval(u, &mut du);
    Ok(du)
}

pub fn lorenz96_rhs(u: &[f64], params: &Lorenz96Params) -> Result<Vec<f64>> {
    if u.len() < 4 {
        return Err(Error::Argument(format!(
            "Lorenz-96 needs dim >= 4, got {}",
            u.len()
        )));
    }
    ensure_dim(params.dim, u.len())?;
    check_finite(u)?;
    let mut du = vec![0.0; u.len()];
    params.eval(u, &mut du);
    Ok(du)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ForwardEuler,
    Rk4,
}

/// Fixed-step integration of one assimilation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorConfig {
    pub scheme: Scheme,
    /// Assimilation interval.
    pub interval: f64,
    /// Inner step; `interval / inner_step` must be a whole number.
    pub inner_step: f64,
}

impl PropagatorConfig {
    pub fn substeps(&self) -> Result<usize> {
        if !(self.interval > 0.0) || !(self.inner_step > 0.0) {
            return Err(Error::Argument(
                "interval and inner step must be positive".into(),
            ));
        }
        let ratio = self.interval / self.inner_step;
        let count = ratio.round();
        if count < 1.0 || (ratio - count).abs() > 1e-9 * count.max(1.0) {
            return Err(Error::Argument(format!(
                "interval {} is not a whole multiple of inner step {}",
                self.interval, self.inner_step
            )));
        }
        Ok(count as usize)
    }
}

/// Applies `interval / inner_step` fixed steps of the configured scheme.
pub fn integrate(
    field: &dyn VectorField,
    u0: &[f64],
    config: &PropagatorConfig,
) -> Result<Vec<f64>> {
    ensure_dim(field.dim(), u0.len())?;
    let steps = config.substeps()?;
    let dt = config.inner_step;
    let d = u0.len();
    let mut u = u0.to_vec();
    match config.scheme {
        Scheme::ForwardEuler => {
            let mut k = vec![0.0; d];
            for step in 0..steps {
                field.eval(&u, &mut k);
                for (ui, ki) in u.iter_mut().zip(&k) {
                    *ui += dt * ki;
                }
                if !u.iter().all(|v| v.is_finite()) {
                    return Err(Error::BlowUp { step });
                }
            }
        }
        Scheme::Rk4 => {
            let (mut k1, mut k2, mut k3, mut k4) =
                (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
            let mut tmp = vec![0.0; d];
            for step in 0..steps {
                field.eval(&u, &mut k1);
                for i in 0..d {
                    tmp[i] = u[i] + 0.5 * dt * k1[i];
                }
                field.eval(&tmp, &mut k2);
                for i in 0..d {
                    tmp[i] = u[i] + 0.5 * dt * k2[i];
                }
                field.eval(&tmp, &mut k3);
                for i in 0..d {
                    tmp[i] = u[i] + dt * k3[i];
                }
                field.eval(&tmp, &mut k4);
                for i in 0..d {
                    u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                if !u.iter().all(|v| v.is_finite()) {
                    return Err(Error::BlowUp { step });
                }
            }
        }
    }
    Ok(u)
}

/// The deterministic map `Psi` advancing a state by one assimilation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow<F> {
    pub field: F,
    pub propagator: PropagatorConfig,
}

impl<F: VectorField> DeterministicMap for Flow<F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        integrate(&self.field, x, &self.propagator)
    }
}

/// `y = x_3 + eta`, `eta ~ N(0, noise_sigma^2)`.
pub fn l63_observe(x: &[f64], rng: &mut dyn RngCore, noise_sigma: f64) -> Vec<f64> {
    let mut y = vec![x[2]];
    add_gaussian(rng, &mut y, noise_sigma);
    y
}

/// `y = arctan(x) + eta` componentwise.
pub fn l96_observe(x: &[f64], rng: &mut dyn RngCore, noise_sigma: f64) -> Vec<f64> {
    let mut y: Vec<f64> = x.iter().map(|v| v.atan()).collect();
    add_gaussian(rng, &mut y, noise_sigma);
    y
}
