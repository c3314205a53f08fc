use super::featuremap::FeatureMap;
use crate::augment::{convolve_separable_pass, gaussian_kernel};
use crate::error::{Error, Result};

/// Per-channel Gaussian smoothing that only averages over foreground pixels.
/// Background pixels keep their values.
pub fn smooth(map: &FeatureMap, sigma: f64) -> Result<FeatureMap> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("smoothing sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(map.clone());
    }
    let (h, w, c) = (map.height, map.width, map.channels);
    let n = h * w;
    let m: Vec<f64> = map.mask.as_slice().iter().map(|&b| f64::from(u8::from(b))).collect();
    let mut planes: Vec<Vec<f64>> = (0..c)
        .map(|ch| (0..n).map(|i| map.data[i * c + ch] as f64 * m[i]).collect())
        .collect();
    planes.push(m);
    let kernel = gaussian_kernel(sigma);
    convolve_separable_pass(&mut planes, h, w, &kernel, true);
    convolve_separable_pass(&mut planes, h, w, &kernel, false);
    let weight = planes.pop().unwrap_or_default();
    let mut out = map.clone();
    for (i, fg) in map.mask.as_slice().iter().enumerate() {
        if !fg || weight[i] <= 0.0 {
            continue;
        }
        for (ch, plane) in planes.iter().enumerate() {
            out.data[i * c + ch] = (plane[i] / weight[i]) as f32;
        }
    }
    Ok(out)
}
