use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use super::patch::{FeatureVector, TexturePatch, MAP_NAMES};
use crate::grid::Grid;

pub const GLCM_LEVELS: usize = 32;
pub const GLCM_DISTANCES: [usize; 3] = [1, 2, 4];
pub const GLCM_ANGLES: [f64; 4] = [0.0, FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4];
pub const GLCM_STATS: [&str; 4] = ["contrast", "correlation", "energy", "homogeneity"];

/// Quantize `[0, 1]` values to `levels` equal-width gray levels.
pub fn quantize(map: &Grid<f64>, levels: usize) -> Grid<usize> {
    map.map(|v| ((v.clamp(0.0, 1.0) * levels as f64) as usize).min(levels - 1))
}

/// Pixel step for a distance and angle; rows grow downward.
pub fn glcm_offset(distance: usize, angle: f64) -> (isize, isize) {
    let d = distance as f64;
    ((d * angle.cos()).round() as isize, (d * angle.sin()).round() as isize)
}

/// Symmetric, normalized co-occurrence matrix (row-major `levels x levels`).
/// Pairs that leave the raster are dropped.
pub fn glcm(levels_map: &Grid<usize>, levels: usize, offset: (isize, isize)) -> Vec<f64> {
    let (h, w) = levels_map.dims();
    let mut m = vec![0.0; levels * levels];
    let (dx, dy) = offset;
    let mut total = 0.0;
    for y in 0..h as isize {
        let y2 = y + dy;
        if y2 < 0 || y2 >= h as isize {
            continue;
        }
        for x in 0..w as isize {
            let x2 = x + dx;
            if x2 < 0 || x2 >= w as isize {
                continue;
            }
            let i = *levels_map.get(x as usize, y as usize);
            let j = *levels_map.get(x2 as usize, y2 as usize);
            m[i * levels + j] += 1.0;
            m[j * levels + i] += 1.0;
            total += 2.0;
        }
    }
    if total > 0.0 {
        for v in &mut m {
            *v /= total;
        }
    }
    m
}

/// Contrast, correlation, energy and homogeneity of a normalized matrix.
/// Correlation is 0 when either marginal has zero variance.
pub fn glcm_stats(m: &[f64], levels: usize) -> [f64; 4] {
    let (mut contrast, mut homogeneity, mut asm) = (0.0, 0.0, 0.0);
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for i in 0..levels {
        for j in 0..levels {
            let p = m[i * levels + j];
            let d = i as f64 - j as f64;
            contrast += p * d * d;
            homogeneity += p / (1.0 + d * d);
            asm += p * p;
            mu_i += p * i as f64;
            mu_j += p * j as f64;
        }
    }
    let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
    for i in 0..levels {
        for j in 0..levels {
            let p = m[i * levels + j];
            let (di, dj) = (i as f64 - mu_i, j as f64 - mu_j);
            var_i += p * di * di;
            var_j += p * dj * dj;
            cov += p * di * dj;
        }
    }
    let correlation = if var_i > 1e-15 && var_j > 1e-15 {
        cov / (var_i * var_j).sqrt()
    } else {
        0.0
    };
    [contrast, correlation, asm.sqrt(), homogeneity]
}

/// Angle-averaged Haralick statistics for each map and distance (36 values).
pub fn glcm_features(patch: &TexturePatch) -> FeatureVector {
    let mut labels = Vec::with_capacity(36);
    let mut values = Vec::with_capacity(36);
    for (map, name) in patch.maps.iter().zip(MAP_NAMES) {
        let q = quantize(map, GLCM_LEVELS);
        for d in GLCM_DISTANCES {
            let mut acc = [0.0; 4];
            for angle in GLCM_ANGLES {
                let s = glcm_stats(&glcm(&q, GLCM_LEVELS, glcm_offset(d, angle)), GLCM_LEVELS);
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v;
                }
            }
            for (v, stat) in acc.into_iter().zip(GLCM_STATS) {
                labels.push(format!("glcm/{name}/d{d}/{stat}"));
                values.push(v / GLCM_ANGLES.len() as f64);
            }
        }
    }
    FeatureVector {
        schema: "glcm".into(),
        labels,
        values,
    }
}
