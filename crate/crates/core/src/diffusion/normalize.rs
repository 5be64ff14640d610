use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, PairedEnsemble};
use crate::error::{ensure_dim, Error, Result};

/// Per-coordinate `z = (v - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineNormalizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AffineNormalizer {
    pub fn new(shift: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        ensure_dim(shift.len(), scale.len())?;
        if scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Argument("normalizer scales must be positive".into()));
        }
        Ok(Self { shift, scale })
    }

    /// Centers each column on its mean and scales by the largest absolute
    /// deviation, so the fitted data lies in `[-1, 1]`. Constant columns get
    /// scale 1.
    pub fn fit(data: &Ensemble) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::Argument(format!(
                "normalizer needs N >= 2, got {}",
                data.len()
            )));
        }
        let shift = data.mean();
        let mut scale = vec![0.0f64; data.dim()];
        for r in data.rows() {
            for ((s, v), m) in scale.iter_mut().zip(r).zip(&shift) {
                *s = s.max((v - m).abs());
            }
        }
        for s in scale.iter_mut() {
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Ok(Self { shift, scale })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply_row(&self, v: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim(), v.len())?;
        Ok(v.iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }

    pub fn invert_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim(), z.len())?;
        Ok(z.iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((x, m), s)| x * s + m)
            .collect())
    }

    pub fn apply(&self, data: &Ensemble) -> Result<Ensemble> {
        self.map(data, |x, m, s| (x - m) / s)
    }

    pub fn invert(&self, data: &Ensemble) -> Result<Ensemble> {
        self.map(data, |x, m, s| x * s + m)
    }

    fn map(&self, data: &Ensemble, f: impl Fn(f64, f64, f64) -> f64) -> Result<Ensemble> {
        ensure_dim(self.dim(), data.dim())?;
        let mut out = data.clone();
        for r in out.rows_mut() {
            for ((x, m), s) in r.iter_mut().zip(&self.shift).zip(&self.scale) {
                *x = f(*x, *m, *s);
            }
        }
        Ok(out)
    }
}

/// Separate state and observation normalizers fitted on the paired data.
pub fn fit_normalizer(paired: &PairedEnsemble) -> Result<(AffineNormalizer, AffineNormalizer)> {
    Ok((
        AffineNormalizer::fit(&paired.states)?,
        AffineNormalizer::fit(&paired.observations)?,
    ))
}

/// Maps the realized observation into the normalized frame. The result may
/// fall outside `[-1, 1]`.
pub fn transform_observation(normalizer_y: &AffineNormalizer, y_hat: &[f64]) -> Result<Vec<f64>> {
    normalizer_y.apply_row(y_hat)
}
