use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kmeans::sq_dist;
use crate::error::{Error, Result};
use crate::pipeline::Samples;

pub const SILHOUETTE_SUBSAMPLE: usize = 10_000;

/// Mean silhouette over a seeded subsample of at most `subsample` points.
/// Points alone in their cluster score 0.
pub fn silhouette(samples: &Samples, labels: &[usize], subsample: usize, seed: u64) -> Result<f64> {
    let n = samples.rows();
    if labels.len() != n {
        return Err(Error::shape(n, labels.len()));
    }
    let idx: Vec<usize> = if n > subsample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, n, subsample).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };
    let mut ids: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    let mut classes = ids.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("silhouette needs at least two clusters"));
    }
    for l in ids.iter_mut() {
        *l = classes.binary_search(l).expect("label listed");
    }
    let m = classes.len();
    let mut counts = vec![0usize; m];
    for &l in &ids {
        counts[l] += 1;
    }
    let scores: Vec<f64> = (0..idx.len())
        .into_par_iter()
        .map(|a| {
            let own = ids[a];
            if counts[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; m];
            let xa = samples.row(idx[a]);
            for (b, &j) in idx.iter().enumerate() {
                if b != a {
                    sums[ids[b]] += sq_dist(xa, samples.row(j)).sqrt();
                }
            }
            let intra = sums[own] / (counts[own] - 1) as f64;
            let inter = (0..m)
                .filter(|&c| c != own)
                .map(|c| sums[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = intra.max(inter);
            if denom > 0.0 {
                (inter - intra) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn separated_blobs_score_high() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (c, off) in [0.0, 50.0].iter().enumerate() {
            for _ in 0..300 {
                data.push(off + rng.sample::<f64, _>(StandardNormal));
                data.push(rng.sample::<f64, _>(StandardNormal));
                labels.push(c);
            }
        }
        let s = Samples::from_flat(data, 2).unwrap();
        assert!(silhouette(&s, &labels, 10_000, 0).unwrap() > 0.9);
    }

    #[test]
    fn singletons_contribute_zero() {
        let s = Samples::from_flat(vec![0.0, 1.0, 10.0], 1).unwrap();
        // point 2 alone scores 0; points 0 and 1: a=1, b=10 or 9
        let v = silhouette(&s, &[0, 0, 1], 100, 0).unwrap();
        let expected = ((10.0 - 1.0) / 10.0 + (9.0 - 1.0) / 9.0) / 3.0;
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn one_cluster_is_rejected() {
        let s = Samples::from_flat(vec![0.0, 1.0], 1).unwrap();
        assert!(silhouette(&s, &[3, 3], 10, 0).is_err());
    }
}
