use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::featuremap::{FeatureMap, Samples};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Principal axes of a sample set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `channels`.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Fewer than the requested components had non-zero variance.
    pub rank_deficient: bool,
}

impl PcaModel {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn project_row(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect()
    }

    pub fn project(&self, samples: &Samples) -> Result<Samples> {
        if samples.cols() != self.channels() {
            return Err(Error::shape(self.channels(), samples.cols()));
        }
        let mut data = Vec::with_capacity(samples.rows() * self.k());
        for row in samples.iter() {
            data.extend(self.project_row(row));
        }
        Samples::from_flat(data, self.k().max(1))
    }

    /// Project every foreground pixel; background stays 0.
    pub fn project_map(&self, map: &FeatureMap) -> Result<FeatureMap> {
        if map.channels != self.channels() {
            return Err(Error::shape(self.channels(), map.channels));
        }
        let projected = self.project(&map.foreground_samples())?;
        map.map_foreground(&projected, &format!("{}+pca{}", map.provenance.extractor, self.k()))
    }

    pub fn reconstruct_row(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, v) in self.components.iter().zip(y) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += v * ci;
            }
        }
        x
    }
}

/// Fit on all samples when `max_samples` is at least their count, otherwise
/// on a seeded random subset.
pub fn fit_pca_subsampled(samples: &Samples, k: usize, max_samples: usize, seed: u64) -> Result<PcaModel> {
    if samples.rows() <= max_samples {
        return fit_pca(samples, k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, samples.rows(), max_samples).into_vec();
    idx.sort_unstable();
    fit_pca(&samples.select(&idx), k)
}

/// Eigen-decomposition of the sample covariance. Signs are fixed so that the
/// largest-magnitude loading of each component is positive.
pub fn fit_pca(samples: &Samples, k: usize) -> Result<PcaModel> {
    let (n, c) = (samples.rows(), samples.cols());
    if k == 0 || k > c {
        return Err(Error::invalid(format!("cannot keep {k} of {c} components")));
    }
    if n <= k {
        return Err(Error::invalid(format!(
            "PCA with {k} components needs more than {n} samples"
        )));
    }
    let mut mean = vec![0.0; c];
    for row in samples.iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(c, c);
    let mut centered = vec![0.0; c];
    for row in samples.iter() {
        for ((d, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *d = v - m;
        }
        for i in 0..c {
            let di = centered[i];
            for j in i..c {
                cov[(i, j)] += di * centered[j];
            }
        }
    }
    for i in 0..c {
        for j in i..c {
            let v = cov[(i, j)] / (n as f64 - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let tol = 1e-12 * total.max(f64::MIN_POSITIVE);

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let lambda = eig.eigenvalues[i];
        if lambda <= tol {
            break;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(lambda);
    }
    let rank_deficient = components.len() < k;
    let explained_variance_ratio = explained_variance.iter().map(|v| v / total).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
        rank_deficient,
    })
}

/// Projection onto component `i` as a raster; background is 0.
pub fn component_map(map: &FeatureMap, model: &PcaModel, i: usize) -> Result<Grid<f64>> {
    if i >= model.k() {
        return Err(Error::invalid(format!("component {i} of {}", model.k())));
    }
    if map.channels != model.channels() {
        return Err(Error::shape(model.channels(), map.channels));
    }
    let comp = &model.components[i];
    let mut x = vec![0.0; map.channels];
    Ok(Grid::from_fn(map.height, map.width, |px, py| {
        if !*map.mask.get(px, py) {
            return 0.0;
        }
        for (d, v) in x.iter_mut().zip(map.pixel(px, py)) {
            *d = *v as f64;
        }
        comp.iter()
            .zip(&x)
            .zip(&model.mean)
            .map(|((c, v), m)| c * (v - m))
            .sum()
    }))
}
