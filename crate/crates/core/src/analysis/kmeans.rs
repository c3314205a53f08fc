use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Samples;

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-6;

/// Nearest-centroid partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Samples,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each Lloyd iteration.
    pub history: Vec<f64>,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &Samples) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Index of the nearest centroid for every sample; ties go to the lower index.
pub fn assign(samples: &Samples, model: &ClusterModel) -> Result<Vec<usize>> {
    if samples.cols() != model.centroids.cols() {
        return Err(Error::shape(model.centroids.cols(), samples.cols()));
    }
    let rows: Vec<usize> = (0..samples.rows()).collect();
    Ok(rows
        .par_iter()
        .map(|&i| nearest(samples.row(i), &model.centroids).0)
        .collect())
}

fn plus_plus<R: Rng>(samples: &Samples, k: usize, rng: &mut R) -> Samples {
    let n = samples.rows();
    let mut centroids = Samples::empty(samples.cols());
    let first = rng.random_range(0..n);
    centroids.push(samples.row(first)).expect("same width");
    let mut d2: Vec<f64> = samples.iter().map(|x| sq_dist(x, samples.row(first))).collect();
    while centroids.rows() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every remaining point coincides with a centroid
            Err(_) => rng.random_range(0..n),
        };
        centroids.push(samples.row(next)).expect("same width");
        let c = centroids.row(centroids.rows() - 1).to_vec();
        for (d, x) in d2.iter_mut().zip(samples.iter()) {
            *d = d.min(sq_dist(x, &c));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below `1e-6` or 300 iterations.
pub fn kmeans(samples: &Samples, k: usize, seed: u64) -> Result<ClusterModel> {
    let (n, d) = (samples.rows(), samples.cols());
    if k == 0 || n < k {
        return Err(Error::invalid(format!(
            "k-means with k={k} needs at least k samples, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(samples, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITER {
        iterations += 1;
        for i in 0..n {
            let (j, dd) = nearest(samples.row(i), &centroids);
            labels[i] = j;
            dists[i] = dd;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i] * d..(labels[i] + 1) * d].iter_mut().zip(samples.row(i)) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            let new: Vec<f64> = if counts[j] == 0 {
                // reseed from the point farthest from its centroid
                let far = (0..n).fold(0, |a, i| if dists[i] > dists[a] { i } else { a });
                dists[far] = 0.0;
                samples.row(far).to_vec()
            } else {
                sums[j * d..(j + 1) * d].iter().map(|s| s / counts[j] as f64).collect()
            };
            shift = shift.max(sq_dist(&new, centroids.row(j)).sqrt());
            centroids.row_mut(j).copy_from_slice(&new);
        }
        let inertia: f64 = samples.iter().map(|x| nearest(x, &centroids).1).sum();
        history.push(inertia);
        if shift < KMEANS_TOL {
            break;
        }
    }
    let inertia = *history.last().unwrap_or(&0.0);
    Ok(ClusterModel {
        centroids,
        inertia,
        iterations,
        history,
    })
}
