use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::{assign, kmeans, ClusterModel};
use super::ward::{cut, ward_agglomerate, Dendrogram};
use crate::error::Result;
use crate::grid::Grid;
use crate::pipeline::{FeatureMap, Samples};

/// k-means on a subsample, then Ward linkage of the centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStepClustering {
    pub kmeans: ClusterModel,
    pub dendrogram: Dendrogram,
}

impl TwoStepClustering {
    pub fn fit(samples: &Samples, k: usize, max_fit_samples: usize, seed: u64) -> Result<Self> {
        let fit = if samples.rows() > max_fit_samples {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, samples.rows(), max_fit_samples).into_vec();
            idx.sort_unstable();
            samples.select(&idx)
        } else {
            samples.clone()
        };
        let kmeans = kmeans(&fit, k, seed)?;
        let dendrogram = ward_agglomerate(&kmeans.centroids, None)?;
        Ok(Self { kmeans, dendrogram })
    }

    /// Fine cluster per sample, or the super-cluster after cutting to `m`.
    pub fn labels(&self, samples: &Samples, m: Option<usize>) -> Result<Vec<usize>> {
        let fine = assign(samples, &self.kmeans)?;
        match m {
            None => Ok(fine),
            Some(m) => {
                let map = cut(&self.dendrogram, m)?;
                Ok(fine.into_iter().map(|l| map[l]).collect())
            }
        }
    }
}

/// Label rasters for each map; background pixels hold 0 and are masked out by
/// the map's own mask.
pub fn label_maps(maps: &[FeatureMap], clustering: &TwoStepClustering, m: Option<usize>) -> Result<Vec<Grid<usize>>> {
    maps.iter()
        .map(|map| {
            let labels = clustering.labels(&map.foreground_samples(), m)?;
            let mut out = Grid::filled(map.height, map.width, 0usize);
            let mut next = labels.into_iter();
            for (o, fg) in out.as_mut_slice().iter_mut().zip(map.mask.as_slice()) {
                if *fg {
                    *o = next.next().expect("one label per foreground pixel");
                }
            }
            Ok(out)
        })
        .collect()
}
