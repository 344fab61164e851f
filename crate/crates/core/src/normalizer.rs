use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Running per-feature mean and variance with clipped standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    /// Standardised values are clipped to `[-clip, clip]`.
    pub clip: f64,
    /// Floor on the standard deviation.
    pub min_std: f64,
}

impl RunningNormalizer {
    pub fn new(dim: usize, clip: f64) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            clip,
            min_std: 1e-2,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> Vec<f64> {
        self.m2
            .iter()
            .map(|&m2| {
                let var = if self.count > 0 { m2 / self.count as f64 } else { 1.0 };
                var.sqrt().max(self.min_std)
            })
            .collect()
    }

    /// Merges a batch into the statistics (Chan et al. pairwise update).
    pub fn update(&mut self, batch: ArrayView2<'_, f64>) -> Result<()> {
        ensure!(
            batch.ncols() == self.dim(),
            Shape,
            "normalizer has {} features, batch has {}",
            self.dim(),
            batch.ncols()
        );
        let n_b = batch.nrows() as u64;
        if n_b == 0 {
            return Ok(());
        }
        let n_a = self.count;
        let n = n_a + n_b;
        for j in 0..self.dim() {
            let col = batch.column(j);
            let mean_b = col.sum() / n_b as f64;
            let m2_b: f64 = col.iter().map(|&x| (x - mean_b) * (x - mean_b)).sum();
            let delta = mean_b - self.mean[j];
            self.mean[j] += delta * n_b as f64 / n as f64;
            self.m2[j] += m2_b + delta * delta * (n_a as f64) * (n_b as f64) / n as f64;
        }
        self.count = n;
        Ok(())
    }

    /// `clip((x − mean) / std)`, row by row. Identity statistics before any update.
    pub fn normalize(&self, batch: ArrayView2<'_, f64>) -> Array2<f64> {
        let std = Array1::from(self.std());
        let mean = Array1::from(self.mean.clone());
        let mut out = (&batch - &mean) / &std;
        out.mapv_inplace(|v| v.clamp(-self.clip, self.clip));
        out
    }
}
