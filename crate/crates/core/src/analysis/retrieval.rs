use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pipeline::FeatureMap;

/// Voxel in feature-map coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPoint {
    pub section: usize,
    pub x: usize,
    pub y: usize,
}

/// Mean feature vector of the query voxels; all must be foreground.
pub fn query_mean(maps: &[FeatureMap], points: &[QueryPoint]) -> Result<Vec<f64>> {
    let Some(first) = points.first() else {
        return Err(Error::invalid("no query points"));
    };
    let channels = maps
        .get(first.section)
        .ok_or(Error::OutOfVolume(first.section))?
        .channels;
    let mut mean = vec![0.0; channels];
    for p in points {
        let map = maps.get(p.section).ok_or(Error::OutOfVolume(p.section))?;
        if p.x >= map.width || p.y >= map.height {
            return Err(Error::OutOfBounds {
                x: p.x as i64,
                y: p.y as i64,
                side: 1,
                width: map.width,
                height: map.height,
            });
        }
        if map.channels != channels {
            return Err(Error::shape(channels, map.channels));
        }
        if !*map.mask.get(p.x, p.y) {
            return Err(Error::invalid(format!(
                "query point ({}, {}) in section {} lies on background",
                p.x, p.y, p.section
            )));
        }
        for (m, v) in mean.iter_mut().zip(map.pixel(p.x, p.y)) {
            *m += *v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= points.len() as f64);
    Ok(mean)
}

/// Gaussian affinity of every foreground voxel to the mean query vector.
pub fn rbf_retrieve(maps: &[FeatureMap], points: &[QueryPoint], sigma: f64) -> Result<Vec<Grid<f64>>> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let q = query_mean(maps, points)?;
    let denom = 2.0 * sigma * sigma;
    maps.par_iter()
        .map(|map| {
            if map.channels != q.len() {
                return Err(Error::shape(q.len(), map.channels));
            }
            Ok(Grid::from_fn(map.height, map.width, |x, y| {
                if !*map.mask.get(x, y) {
                    return 0.0;
                }
                let d2: f64 = map
                    .pixel(x, y)
                    .iter()
                    .zip(&q)
                    .map(|(v, m)| (*v as f64 - m).powi(2))
                    .sum();
                (-d2 / denom).exp()
            }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Provenance;

    fn map() -> FeatureMap {
        let data: Vec<f32> = (0..16 * 16 * 2).map(|i| ((i * 7) % 11) as f32 * 0.3).collect();
        let mut mask = Grid::filled(16, 16, true);
        mask.set(0, 0, false);
        FeatureMap::new(16, 16, 2, data, mask, Provenance::default()).unwrap()
    }

    #[test]
    fn single_point_has_unit_affinity() {
        let m = map();
        let p = QueryPoint { section: 0, x: 5, y: 7 };
        let a = rbf_retrieve(&[m], &[p], 3.5).unwrap();
        assert_eq!(*a[0].get(5, 7), 1.0);
        assert_eq!(*a[0].get(0, 0), 0.0);
    }

    #[test]
    fn distance_sigma_root_two_gives_inverse_e() {
        let mut m = map();
        m.pixel_mut(1, 1).copy_from_slice(&[0.0, 0.0]);
        m.pixel_mut(2, 1).copy_from_slice(&[2.0, 2.0]);
        let sigma = 2.0f64;
        let a = rbf_retrieve(&[m], &[QueryPoint { section: 0, x: 1, y: 1 }], sigma).unwrap();
        // distance sqrt(8) = sigma * sqrt(2)
        assert!((a[0].get(2, 1) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn background_and_missing_sections_are_errors() {
        let m = map();
        assert!(rbf_retrieve(&[m.clone()], &[QueryPoint { section: 0, x: 0, y: 0 }], 1.0).is_err());
        assert!(matches!(
            rbf_retrieve(&[m], &[QueryPoint { section: 2, x: 1, y: 0 }], 1.0),
            Err(Error::OutOfVolume(2))
        ));
    }
}
