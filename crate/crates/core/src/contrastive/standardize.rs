use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel running mean and standard deviation, frozen after a fixed
/// number of batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub count: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean.
    pub m2: Vec<f64>,
    pub batches_seen: u64,
    pub max_batches: u64,
}

impl Standardizer {
    pub fn new(channels: usize, max_batches: u64) -> Self {
        Self {
            count: vec![0.0; channels],
            mean: vec![0.0; channels],
            m2: vec![0.0; channels],
            batches_seen: 0,
            max_batches,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn frozen(&self) -> bool {
        self.batches_seen >= self.max_batches
    }

    pub fn std(&self) -> Vec<f64> {
        self.m2
            .iter()
            .zip(&self.count)
            .map(|(m2, n)| if *n > 0.0 { (m2 / n).sqrt().max(STD_FLOOR) } else { 1.0 })
            .collect()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.shape.len() != 4 || x.shape[1] != self.channels() {
            return Err(Error::shape(
                format!("[N, {}, H, W]", self.channels()),
                format!("{:?}", x.shape),
            ));
        }
        Ok(())
    }

    /// Merge the statistics of a batch unless frozen.
    pub fn update(&mut self, x: &Tensor) -> Result<()> {
        self.check(x)?;
        if self.frozen() {
            return Ok(());
        }
        let (n, c, hw) = (x.shape[0], x.shape[1], x.shape[2] * x.shape[3]);
        for ch in 0..c {
            let mut cnt = 0.0;
            let mut sum = 0.0;
            for i in 0..n {
                let b = (i * c + ch) * hw;
                sum += x.data[b..b + hw].iter().sum::<f64>();
                cnt += hw as f64;
            }
            if cnt == 0.0 {
                continue;
            }
            let mean_b = sum / cnt;
            let mut m2_b = 0.0;
            for i in 0..n {
                let b = (i * c + ch) * hw;
                m2_b += x.data[b..b + hw]
                    .iter()
                    .map(|v| (v - mean_b) * (v - mean_b))
                    .sum::<f64>();
            }
            let (na, ma) = (self.count[ch], self.mean[ch]);
            let total = na + cnt;
            let delta = mean_b - ma;
            self.mean[ch] = ma + delta * cnt / total;
            self.m2[ch] += m2_b + delta * delta * na * cnt / total;
            self.count[ch] = total;
        }
        self.batches_seen += 1;
        Ok(())
    }

    /// `(x - mean) / std` per channel.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let (n, c, hw) = (x.shape[0], x.shape[1], x.shape[2] * x.shape[3]);
        let std = self.std();
        let mut out = x.clone();
        for i in 0..n {
            for ch in 0..c {
                let b = (i * c + ch) * hw;
                for v in &mut out.data[b..b + hw] {
                    *v = (*v - self.mean[ch]) / std[ch];
                }
            }
        }
        Ok(out)
    }

    /// Update with the batch, then standardize it.
    pub fn standardize(&mut self, x: &Tensor) -> Result<Tensor> {
        self.update(x)?;
        self.apply(x)
    }
}
