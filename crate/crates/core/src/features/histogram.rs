use super::patch::{FeatureVector, TexturePatch, MAP_NAMES};
use crate::grid::Grid;

pub const HISTOGRAM_BINS: usize = 128;
pub const HISTOGRAM_STATS: [&str; 5] = ["mean", "variance", "skewness", "kurtosis", "entropy"];

/// Normalized histogram over `[0, 1]`; values are clipped first.
pub fn normalized_histogram(values: &[f64], bins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; bins];
    if values.is_empty() {
        return hist;
    }
    for v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let n = values.len() as f64;
    for h in &mut hist {
        *h /= n;
    }
    hist
}

/// Mean, variance, skewness, excess kurtosis and entropy of a histogram
/// over bin centers. Higher moments of a degenerate histogram are 0.
pub fn histogram_stats(hist: &[f64]) -> [f64; 5] {
    let bins = hist.len() as f64;
    let center = |i: usize| (i as f64 + 0.5) / bins;
    let mean: f64 = hist.iter().enumerate().map(|(i, p)| p * center(i)).sum();
    let moment = |k: i32| -> f64 {
        hist.iter()
            .enumerate()
            .map(|(i, p)| p * (center(i) - mean).powi(k))
            .sum()
    };
    let var = moment(2);
    let (skew, kurt) = if var > 1e-15 {
        (moment(3) / var.powf(1.5), moment(4) / (var * var) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let entropy: f64 = -hist.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    [mean, var, skew, kurt, entropy + 0.0]
}

fn map_stats(map: &Grid<f64>) -> [f64; 5] {
    histogram_stats(&normalized_histogram(map.as_slice(), HISTOGRAM_BINS))
}

/// Five histogram statistics for each of the three maps (15 values).
pub fn histogram_features(patch: &TexturePatch) -> FeatureVector {
    let mut labels = Vec::with_capacity(15);
    let mut values = Vec::with_capacity(15);
    for (map, name) in patch.maps.iter().zip(MAP_NAMES) {
        for (v, stat) in map_stats(map).into_iter().zip(HISTOGRAM_STATS) {
            labels.push(format!("hist/{name}/{stat}"));
            values.push(v);
        }
    }
    FeatureVector {
        schema: "histogram".into(),
        labels,
        values,
    }
}
