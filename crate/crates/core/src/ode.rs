//! Explicit Dormand-Prince 5(4) with embedded error control.
//!
//! Step-size control mirrors the common RK45 conventions: RMS error norm
//! scaled by `atol + rtol * max(|y|, |y_new|)`, safety factor 0.9, step
//! growth clamped to [0.2, 10], no growth right after a rejection, and the
//! standard two-evaluation starting-step heuristic.

use crate::error::{Error, Result};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 5.0;

const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-3,
            atol: 1e-6,
            max_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn rms(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    (values.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

impl Dopri5 {
    /// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`, overwriting `y`.
    ///
    /// Fails with [`Error::Solver`] (member unset) when `max_steps` attempts
    /// are exhausted, the step underflows, or the state turns non-finite.
    pub fn integrate<F>(&self, mut f: F, t0: f64, t1: f64, y: &mut [f64]) -> Result<OdeStats>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        if !(t1 > t0) {
            return Err(Error::Argument(format!(
                "integration interval [{t0}, {t1}] is empty"
            )));
        }
        if !(self.rtol > 0.0) || !(self.atol > 0.0) || self.max_steps == 0 {
            return Err(Error::Argument(
                "ODE tolerances and max_steps must be positive".into(),
            ));
        }
        let n = y.len();
        let mut stats = OdeStats::default();
        if n == 0 {
            return Ok(stats);
        }
        let fail = |t: f64| Error::Solver {
            member: None,
            tau: t,
            max_steps: self.max_steps,
        };

        let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
        let mut tmp = vec![0.0; n];
        let mut y_new = vec![0.0; n];

        f(t0, y, &mut k[0]);
        stats.evaluations += 1;
        let mut h_abs = self.initial_step(&mut f, t0, t1, y, &k[0].clone(), &mut tmp, &mut stats);

        let mut t = t0;
        while t < t1 {
            let min_step = 10.0 * (next_up(t) - t).abs();
            h_abs = h_abs.max(min_step);
            let mut rejected = false;
            loop {
                if stats.accepted + stats.rejected >= self.max_steps || h_abs < min_step {
                    return Err(fail(t));
                }
                let mut t_new = t + h_abs;
                if t_new > t1 {
                    t_new = t1;
                }
                let h = t_new - t;
                h_abs = h.abs();

                for s in 1..6 {
                    for i in 0..n {
                        let mut acc = 0.0;
                        for (j, a) in A[s][..s].iter().enumerate() {
                            acc += k[j][i] * a;
                        }
                        tmp[i] = y[i] + h * acc;
                    }
                    f(t + C[s] * h, &tmp, &mut k[s]);
                }
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, b) in B.iter().enumerate() {
                        acc += k[j][i] * b;
                    }
                    y_new[i] = y[i] + h * acc;
                }
                f(t + h, &y_new, &mut k[6]);
                stats.evaluations += 6;

                let err = rms(
                    (0..n).map(|i| {
                        let mut e = 0.0;
                        for (j, ej) in E.iter().enumerate() {
                            e += k[j][i] * ej;
                        }
                        let scale = self.atol + y[i].abs().max(y_new[i].abs()) * self.rtol;
                        e * h / scale
                    }),
                    n,
                );
                if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
                    // Treat like a rejection; a shrinking step either recovers or hits the limits.
                    h_abs *= MIN_FACTOR;
                    rejected = true;
                    stats.rejected += 1;
                    continue;
                }
                if err < 1.0 {
                    let mut factor = if err == 0.0 {
                        MAX_FACTOR
                    } else {
                        MAX_FACTOR.min(SAFETY * err.powf(ERROR_EXPONENT))
                    };
                    if rejected {
                        factor = factor.min(1.0);
                    }
                    h_abs *= factor;
                    stats.accepted += 1;
                    t = t_new;
                    y.copy_from_slice(&y_new);
                    k.swap(0, 6);
                    break;
                }
                h_abs *= MIN_FACTOR.max(SAFETY * err.powf(ERROR_EXPONENT));
                rejected = true;
                stats.rejected += 1;
            }
        }
        Ok(stats)
    }

    #[allow(clippy::too_many_arguments)]
    fn initial_step<F>(
        &self,
        f: &mut F,
        t0: f64,
        t1: f64,
        y0: &[f64],
        f0: &[f64],
        y1: &mut [f64],
        stats: &mut OdeStats,
    ) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y0.len();
        let interval = t1 - t0;
        let scale: Vec<f64> = y0.iter().map(|v| self.atol + v.abs() * self.rtol).collect();
        let d0 = rms(y0.iter().zip(&scale).map(|(v, s)| v / s), n);
        let d1 = rms(f0.iter().zip(&scale).map(|(v, s)| v / s), n);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(interval);
        for i in 0..n {
            y1[i] = y0[i] + h0 * f0[i];
        }
        let mut f1 = vec![0.0; n];
        f(t0 + h0, y1, &mut f1);
        stats.evaluations += 1;
        let d2 = rms(
            f1.iter().zip(f0).zip(&scale).map(|((a, b), s)| (a - b) / s),
            n,
        ) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        (100.0 * h0).min(h1).min(interval)
    }
}

fn next_up(t: f64) -> f64 {
    if t.is_nan() || t == f64::INFINITY {
        return t;
    }
    if t == 0.0 {
        return f64::from_bits(1);
    }
    let bits = t.to_bits();
    f64::from_bits(if t > 0.0 { bits + 1 } else { bits - 1 })
}
