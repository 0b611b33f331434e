use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, WeldError};

/// Per-feature z-score transform fitted on training data.
///
/// Features with zero spread get a unit scale so that the transform stays
/// invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ZScore {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit<X: AsRef<[f64]>>(data: &[X]) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| WeldError::EmptyInput("cannot fit normalization on no data".into()))?;
        let dim = first.as_ref().len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in data {
            let x = x.as_ref();
            check_dim(dim, x.len())?;
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for x in data {
            var.iter_mut()
                .zip(x.as_ref())
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| v * s + m)
            .collect())
    }

    pub fn apply_all<X: AsRef<[f64]>>(&self, data: &[X]) -> Result<Vec<Vec<f64>>> {
        data.iter().map(|x| self.apply(x.as_ref())).collect()
    }
}
