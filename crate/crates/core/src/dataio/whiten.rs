use serde::{Deserialize, Serialize};

use crate::dataio::FeatureSet;
use crate::error::{check_dim, Error, Result};

/// Lower bound applied to every per-dimension standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl WhitenStats {
    /// Statistics over the given rows of `fs`.
    pub fn from_rows(fs: &FeatureSet, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput(
                "whitening statistics need at least one sample".into(),
            ));
        }
        let d = fs.dim();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (m, v) in mean.iter_mut().zip(fs.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &i in rows {
            for ((s, v), m) in var.iter_mut().zip(fs.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(WhitenStats { mean, std })
    }

    pub fn from_all(fs: &FeatureSet) -> Result<Self> {
        let rows: Vec<usize> = (0..fs.len()).collect();
        Self::from_rows(fs, &rows)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std`, elementwise.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect())
    }
}

pub fn whiten(fs: &FeatureSet, stats: &WhitenStats) -> Result<FeatureSet> {
    check_dim(fs.dim(), stats.dim())?;
    Ok(fs.map_rows(|src, dst| {
        for (((o, v), m), s) in dst.iter_mut().zip(src).zip(&stats.mean).zip(&stats.std) {
            *o = (v - m) / s;
        }
    }))
}
