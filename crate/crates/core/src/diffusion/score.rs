use crate::ensemble::{Ensemble, PairedEnsemble};
use crate::error::{ensure_dim, Error, Result};
use crate::kernels::{convolved_sigma, squared_distance, IsotropicGaussian};

use super::DiffusionConfig;

/// Noise level `sigma(t) = t * sigma_max` and drift factor
/// `gamma(t) / 2 = t * sigma_max^2`, where `gamma = d(sigma^2)/dt`.
pub fn sigma_schedule(t: f64, sigma_max: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Argument(format!(
            "pseudo-time must lie in [0, 1], got {t}"
        )));
    }
    Ok((t * sigma_max, t * sigma_max * sigma_max))
}

/// Closed-form score of the kernel density estimate conditioned on one
/// observation, in the normalized frame.
///
/// With `sbar(t)^2 = sigma(t)^2 + sigma_x^2` the score is
/// `sum_i w_i(x, t) (x_i - x) / sbar(t)^2`, where the weights are the
/// softmax of `log g_{sigma_y}(y_hat - y_i) + log g_{sbar(t)}(x - x_i)`.
/// The observation terms do not depend on `t` and are computed once.
#[derive(Debug, Clone)]
pub struct ScoreField {
    states: Ensemble,
    obs_log_weights: Vec<f64>,
    sigma_x: f64,
    config: DiffusionConfig,
}

impl ScoreField {
    pub fn new(paired: &PairedEnsemble, y_hat: &[f64], config: &DiffusionConfig) -> Result<Self> {
        config.validate()?;
        ensure_dim(paired.observations.dim(), y_hat.len())?;
        if paired.is_empty() {
            return Err(Error::Argument(
                "score field needs at least one pair".into(),
            ));
        }
        let kernel = IsotropicGaussian::new(config.sigma_y, y_hat.len())?;
        let obs_log_weights = paired
            .observations
            .rows()
            .map(|y| kernel.log_eval_sq(squared_distance(y_hat, y)))
            .collect();
        Ok(Self {
            states: paired.states.clone(),
            obs_log_weights,
            sigma_x: config.sigma_x,
            config: *config,
        })
    }

    pub fn config(&self) -> &DiffusionConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.states.dim()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &Ensemble {
        &self.states
    }

    /// `log g_{sigma_y}(y_hat - y_i)` per pair.
    pub fn obs_log_weights(&self) -> &[f64] {
        &self.obs_log_weights
    }

    /// Smoothed bandwidth `sqrt(sigma(t)^2 + sigma_x^2)`; equals `sigma_x` at `t = 0`.
    pub fn sigma_bar(&self, t: f64) -> Result<f64> {
        let (sigma, _) = sigma_schedule(t, self.config.sigma_max)?;
        if sigma > 0.0 {
            convolved_sigma(sigma, self.sigma_x)
        } else {
            Ok(self.sigma_x)
        }
    }

    fn sigma_bar_sq(&self, t: f64) -> f64 {
        let s = t * self.config.sigma_max;
        s * s + self.sigma_x * self.sigma_x
    }

    /// Normalized mixture weights at `(x, t)`.
    pub fn weights(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(x, t)?;
        let mut logits = vec![0.0; self.len()];
        let total = self.softmax_logits(x, self.sigma_bar_sq(t), &mut logits);
        Ok(logits.into_iter().map(|e| e / total).collect())
    }

    pub fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(x, t)?;
        let mut out = vec![0.0; x.len()];
        let mut buf = vec![0.0; self.len()];
        self.score_into(x, t, &mut buf, &mut out);
        Ok(out)
    }

    fn check(&self, x: &[f64], t: f64) -> Result<()> {
        ensure_dim(self.dim(), x.len())?;
        sigma_schedule(t, self.config.sigma_max)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Argument("score query point must be finite".into()));
        }
        Ok(())
    }

    /// Fills `buf` with unnormalized weights `exp(logit_i - max)` and returns their sum.
    fn softmax_logits(&self, x: &[f64], sbar_sq: f64, buf: &mut [f64]) -> f64 {
        let inv = 0.5 / sbar_sq;
        let mut max = f64::NEG_INFINITY;
        for ((l, xi), lw) in buf
            .iter_mut()
            .zip(self.states.rows())
            .zip(&self.obs_log_weights)
        {
            *l = lw - squared_distance(x, xi) * inv;
            max = max.max(*l);
        }
        let mut total = 0.0;
        for l in buf.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        total
    }

    /// Unchecked hot path used by the sampler. `buf` must hold `len()` entries.
    pub(crate) fn score_into(&self, x: &[f64], t: f64, buf: &mut [f64], out: &mut [f64]) {
        let sbar_sq = self.sigma_bar_sq(t);
        let total = self.softmax_logits(x, sbar_sq, buf);
        out.fill(0.0);
        for (w, xi) in buf.iter().zip(self.states.rows()) {
            for (o, v) in out.iter_mut().zip(xi) {
                *o += w * v;
            }
        }
        for (o, xv) in out.iter_mut().zip(x) {
            *o = (*o / total - xv) / sbar_sq;
        }
    }

    /// Reverse-time drift `dx/dtau = (gamma(t)/2) s(x, t)` with `t = 1 - tau`.
    pub(crate) fn drift_into(&self, x: &[f64], tau: f64, buf: &mut [f64], out: &mut [f64]) {
        let t = (1.0 - tau).clamp(0.0, 1.0);
        let half_gamma = t * self.config.sigma_max * self.config.sigma_max;
        self.score_into(x, t, buf, out);
        out.iter_mut().for_each(|v| *v *= half_gamma);
    }
}
