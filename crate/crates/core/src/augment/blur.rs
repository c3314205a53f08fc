//! Gaussian blur of parameter maps.

use super::resample::Phasor;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::ParameterMaps;

/// Normalized 1D Gaussian taps truncated at `4 sigma`; index `radius` is the center.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Convolve rows (`along_x`) or columns of several same-sized planes with a
/// symmetric kernel; taps falling outside the raster are dropped and the
/// remaining weights renormalized.
pub(crate) fn convolve_separable_pass(planes: &mut [Vec<f64>], h: usize, w: usize, kernel: &[f64], along_x: bool) {
    let radius = kernel.len() / 2;
    let (n_lines, len) = if along_x { (h, w) } else { (w, h) };
    let (step, line_step) = if along_x { (1, w) } else { (w, 1) };
    let mut src = vec![0.0; len];
    let full: f64 = kernel.iter().sum();
    for plane in planes.iter_mut() {
        for line in 0..n_lines {
            let base = line * line_step;
            for (pos, v) in src.iter_mut().enumerate() {
                *v = plane[base + pos * step];
            }
            for pos in 0..len {
                if pos >= radius && pos + radius < len {
                    let acc: f64 = src[pos - radius..=pos + radius]
                        .iter()
                        .zip(kernel)
                        .map(|(a, b)| a * b)
                        .sum();
                    plane[base + pos * step] = acc / full;
                    continue;
                }
                // kernel taps k with 0 <= pos + k - radius < len
                let k_lo = radius.saturating_sub(pos);
                let k_hi = (len + radius - pos).min(kernel.len());
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (k, &wk) in kernel.iter().enumerate().take(k_hi).skip(k_lo) {
                    acc += wk * src[pos + k - radius];
                    wsum += wk;
                }
                plane[base + pos * step] = acc / wsum;
            }
        }
    }
}

/// Blur with a separable Gaussian. The filter acts on the linear
/// `(I_T, r I_T cos 2phi, r I_T sin 2phi)` representation, which is the
/// resampling rule with 2D weights `g(dx) g(dy)`.
pub fn gaussian_blur(maps: &ParameterMaps, sigma: f64) -> Result<ParameterMaps> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("blur sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(maps.clone());
    }
    let (h, w) = maps.dims();
    let n = h * w;
    let mut planes = vec![vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let ph = Phasor::from_params(
            maps.transmittance.as_slice()[i],
            maps.retardation.as_slice()[i],
            maps.direction.as_slice()[i],
        );
        planes[0][i] = ph.transmittance;
        planes[1][i] = ph.re;
        planes[2][i] = ph.im;
    }
    let kernel = gaussian_kernel(sigma);
    convolve_separable_pass(&mut planes, h, w, &kernel, true);
    convolve_separable_pass(&mut planes, h, w, &kernel, false);

    let mut out = maps.clone();
    for i in 0..n {
        let (t, r, p) = Phasor {
            transmittance: planes[0][i],
            re: planes[1][i],
            im: planes[2][i],
        }
        .to_params();
        out.transmittance.as_mut_slice()[i] = t;
        out.retardation.as_mut_slice()[i] = r;
        out.direction.as_mut_slice()[i] = p;
    }
    Ok(out)
}

/// Separable Gaussian over a scalar raster (no renormalization by mask).
pub fn blur_scalar(grid: &Grid<f64>, sigma: f64) -> Grid<f64> {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let (h, w) = grid.dims();
    let mut planes = vec![grid.as_slice().to_vec()];
    let kernel = gaussian_kernel(sigma);
    convolve_separable_pass(&mut planes, h, w, &kernel, true);
    convolve_separable_pass(&mut planes, h, w, &kernel, false);
    Grid::from_vec(h, w, planes.pop().unwrap_or_default()).expect("dims preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn kernel_normalized_and_truncated() {
        let k = gaussian_kernel(1.5);
        assert_eq!(k.len(), 2 * 6 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_kernel(0.0), vec![1.0]);
    }

    #[test]
    fn zero_sigma_identity() {
        let maps = ParameterMaps::constant(3, 3, 0.5, 0.2, 0.3, 1.0);
        assert_eq!(gaussian_blur(&maps, 0.0).unwrap(), maps);
        assert!(gaussian_blur(&maps, -1.0).is_err());
    }

    #[test]
    fn constant_maps_unchanged() {
        let maps = ParameterMaps::constant(7, 9, 0.5, 2.2, 0.3, 1.0);
        let out = gaussian_blur(&maps, 1.3).unwrap();
        for i in 0..63 {
            assert!((out.transmittance.as_slice()[i] - 0.5).abs() < 1e-14);
            assert!((out.retardation.as_slice()[i] - 0.3).abs() < 1e-14);
            assert!((out.direction.as_slice()[i] - 2.2).abs() < 1e-13);
        }
    }

    #[test]
    fn checkerboard_of_opposing_directions_loses_retardation() {
        let (h, w) = (12, 12);
        let mut maps = ParameterMaps::constant(h, w, 0.5, 0.0, 0.6, 1.0);
        maps.direction = Grid::from_fn(h, w, |x, y| if (x + y) % 2 == 0 { 0.0 } else { FRAC_PI_2 });
        let out = gaussian_blur(&maps, 1.0).unwrap();
        for y in 2..h - 2 {
            for x in 2..w - 2 {
                assert!(*out.retardation.get(x, y) < 0.6);
            }
        }
    }
}
