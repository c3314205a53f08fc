//! Slow, direct reference implementations used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use pli_core::analysis::QueryPoint;
use pli_core::pipeline::FeatureMap;
use pli_core::Grid;

/// `(a, b, height, size)` per merge, recomputing every Ward distance from
/// cluster members and centroids at each step.
pub fn ward_reference(points: &[Vec<f64>]) -> Vec<(usize, usize, f64, usize)> {
    let n = points.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| {
        let d = points[0].len();
        let mut c = vec![0.0; d];
        for &m in members {
            for (ci, v) in c.iter_mut().zip(&points[m]) {
                *ci += v;
            }
        }
        c.iter_mut().for_each(|v| *v /= members.len() as f64);
        c
    };
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let (ni, nj) = (clusters[i].1.len() as f64, clusters[j].1.len() as f64);
                let (ci, cj) = (centroid(&clusters[i].1), centroid(&clusters[j].1));
                let sq: f64 = ci.iter().zip(&cj).map(|(a, b)| (a - b) * (a - b)).sum();
                let d = (2.0 * ni * nj / (ni + nj) * sq).sqrt();
                let (a, b) = (clusters[i].0, clusters[j].0);
                let key = (a.min(b), a.max(b));
                let better = match best {
                    None => true,
                    Some((bd, bk, _, _)) => d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && key < bk),
                };
                if better {
                    best = Some((d, key, i, j));
                }
            }
        }
        let (d, (a, b), i, j) = best.expect("at least two clusters");
        let mut members = clusters[i].1.clone();
        members.extend(&clusters[j].1);
        out.push((a, b, d, members.len()));
        clusters.remove(j);
        clusters[i] = (n + step, members);
    }
    out
}

/// Double loop over all voxels of all maps.
pub fn rbf_reference(maps: &[FeatureMap], points: &[QueryPoint], sigma: f64) -> Vec<Grid<f64>> {
    let c = maps[0].channels;
    let mut q = vec![0.0; c];
    for p in points {
        let m = &maps[p.section];
        for k in 0..c {
            q[k] += m.data[(p.y * m.width + p.x) * c + k] as f64 / points.len() as f64;
        }
    }
    maps.iter()
        .map(|m| {
            let mut g = Grid::filled(m.height, m.width, 0.0);
            for y in 0..m.height {
                for x in 0..m.width {
                    if !*m.mask.get(x, y) {
                        continue;
                    }
                    let mut d2 = 0.0;
                    for k in 0..c {
                        let v = m.data[(y * m.width + x) * c + k] as f64 - q[k];
                        d2 += v * v;
                    }
                    *g.get_mut(x, y) = (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
            g
        })
        .collect()
}

/// InfoNCE by explicit double loops over rows and candidates.
pub fn info_nce_reference(z: &[Vec<f64>], pairs: &[(usize, usize)], tau: f64) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut total = 0.0;
    let mut terms = 0;
    for &(i, j) in pairs {
        for (a, p) in [(i, j), (j, i)] {
            let mut denom = 0.0;
            for k in 0..z.len() {
                if k != a {
                    denom += (cos(&z[a], &z[k]) / tau).exp();
                }
            }
            total += -((cos(&z[a], &z[p]) / tau).exp() / denom).ln();
            terms += 1;
        }
    }
    total / terms as f64
}

/// Weighted sum of sampled intensity profiles, then a discrete Fourier fit of
/// the mean and second harmonic. Returns `(I_T, r, phi)`.
pub fn profile_mix_reference(samples: &[(f64, f64, f64, f64)]) -> (f64, f64, f64) {
    const ANGLES: usize = 36;
    let rho = |k: usize| k as f64 * PI / ANGLES as f64;
    let profile: Vec<f64> = (0..ANGLES)
        .map(|k| {
            samples
                .iter()
                .map(|&(w, t, r, phi)| w * t / 2.0 * (1.0 + r * (2.0 * rho(k) - 2.0 * phi).sin()))
                .sum()
        })
        .collect();
    let a0: f64 = profile.iter().sum::<f64>() / ANGLES as f64;
    let b: f64 = profile
        .iter()
        .enumerate()
        .map(|(k, v)| v * (2.0 * rho(k)).sin())
        .sum::<f64>()
        * 2.0
        / ANGLES as f64;
    let c: f64 = profile
        .iter()
        .enumerate()
        .map(|(k, v)| v * (2.0 * rho(k)).cos())
        .sum::<f64>()
        * 2.0
        / ANGLES as f64;
    let transmittance = 2.0 * a0;
    let r = b.hypot(c) / a0;
    let phi = (0.5 * (-c).atan2(b)).rem_euclid(PI);
    (transmittance, r, phi)
}

/// Smallest difference of two axial angles.
pub fn axial_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}
