use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::ode::Dopri5;
use crate::rng::RngStream;

use super::{Controller, ScoreField};

/// Terminal samples of the reverse process (normalized frame).
#[derive(Debug, Clone)]
pub struct ReverseSample {
    pub samples: Ensemble,
    /// Accepted solver steps per member. Identical across members under the
    /// shared controller.
    pub steps: Vec<usize>,
}

/// Draws `n_out` members from `N(0, sigma_max^2 I)` (member `i` from
/// `rng.member(i)`) and integrates the reverse ODE over `tau in [0, 1]`.
pub fn reverse_sample(field: &ScoreField, n_out: usize, rng: &RngStream) -> Result<ReverseSample> {
    if n_out < 1 {
        return Err(Error::Argument("reverse_sample needs n_out >= 1".into()));
    }
    let config = field.config();
    let d = field.dim();
    let mut samples = Ensemble::zeros(n_out, d);
    samples
        .as_mut_slice()
        .par_chunks_exact_mut(d)
        .enumerate()
        .for_each(|(i, row)| {
            let mut r = rng.member(i).rng();
            for v in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut r);
                *v = config.sigma_max * z;
            }
        });
    let solver = Dopri5 {
        rtol: config.ode_rtol,
        atol: config.ode_atol,
        max_steps: config.max_steps,
    };
    let n_pairs = field.len();

    let steps = match config.controller {
        Controller::Shared => {
            let drift = |tau: f64, y: &[f64], dy: &mut [f64]| {
                dy.par_chunks_exact_mut(d)
                    .zip(y.par_chunks_exact(d))
                    .for_each_init(
                        || vec![0.0; n_pairs],
                        |buf, (out, x)| field.drift_into(x, tau, buf, out),
                    );
            };
            let stats = solver.integrate(drift, 0.0, 1.0, samples.as_mut_slice())?;
            vec![stats.accepted; n_out]
        }
        Controller::PerMember => samples
            .as_mut_slice()
            .par_chunks_exact_mut(d)
            .enumerate()
            .map_init(
                || vec![0.0; n_pairs],
                |buf, (i, x)| {
                    solver
                        .integrate(|tau, y, dy| field.drift_into(y, tau, buf, dy), 0.0, 1.0, x)
                        .map(|s| s.accepted)
                        .map_err(|e| match e {
                            Error::Solver { tau, max_steps, .. } => Error::Solver {
                                member: Some(i),
                                tau,
                                max_steps,
                            },
                            other => other,
                        })
                },
            )
            .collect::<Result<Vec<_>>>()?,
    };
    if !samples.is_finite() {
        return Err(Error::Solver {
            member: None,
            tau: 1.0,
            max_steps: config.max_steps,
        });
    }
    Ok(ReverseSample { samples, steps })
}
