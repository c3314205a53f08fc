use super::patch::{FeatureVector, TexturePatch, MAP_NAMES};
use crate::grid::Grid;

pub const LBP_POINTS: usize = 8;
pub const LBP_RADII: [usize; 3] = [1, 2, 3];
/// Uniform codes `0..=P` plus one bin for every non-uniform pattern.
pub const LBP_BINS: usize = LBP_POINTS + 2;

/// Neighbor offset as signed unit steps and absolute magnitudes.
#[derive(Clone, Copy, Debug)]
struct Offset {
    sx: isize,
    sy: isize,
    ax: f64,
    ay: f64,
}

fn offsets(radius: usize) -> [Offset; LBP_POINTS] {
    let r = radius as f64;
    let a = r / std::f64::consts::SQRT_2;
    // counter-clockwise starting at +x, with y pointing down
    let dirs = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];
    dirs.map(|(sx, sy): (isize, isize)| {
        let diagonal = sx != 0 && sy != 0;
        let m = if diagonal { a } else { r };
        Offset {
            sx,
            sy,
            ax: if sx == 0 { 0.0 } else { m },
            ay: if sy == 0 { 0.0 } else { m },
        }
    })
}

// Bilinear sample built from the near and far pixel along each axis, averaged
// over both interpolation orders so that rotations and mirrors of the offset
// set reproduce the same values bit for bit.
fn sample(map: &Grid<f64>, x: usize, y: usize, o: Offset) -> f64 {
    let (ix, fx) = (o.ax.floor(), o.ax - o.ax.floor());
    let (iy, fy) = (o.ay.floor(), o.ay - o.ay.floor());
    let px = |k: f64| (x as isize + o.sx * k as isize) as usize;
    let py = |k: f64| (y as isize + o.sy * k as isize) as usize;
    let v = |kx: f64, ky: f64| {
        if (kx > ix && fx == 0.0) || (ky > iy && fy == 0.0) {
            0.0
        } else {
            *map.get(px(kx), py(ky))
        }
    };
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + t * (b - a) };
    let (n0, n1) = (v(ix, iy), v(ix + 1.0, iy));
    let (f0, f1) = (v(ix, iy + 1.0), v(ix + 1.0, iy + 1.0));
    let xy = lerp(lerp(n0, n1, fx), lerp(f0, f1, fx), fy);
    let yx = lerp(lerp(n0, f0, fy), lerp(n1, f1, fy), fx);
    0.5 * (xy + yx)
}

/// Rotation-invariant uniform code of one pixel: the number of neighbors
/// strictly brighter than the center for uniform patterns, `P + 1` otherwise.
pub fn lbp_code(map: &Grid<f64>, x: usize, y: usize, radius: usize) -> usize {
    let c = *map.get(x, y);
    let bits = offsets(radius).map(|o| sample(map, x, y, o) > c);
    let transitions = (0..LBP_POINTS)
        .filter(|&p| bits[p] != bits[(p + 1) % LBP_POINTS])
        .count();
    if transitions <= 2 {
        bits.iter().filter(|b| **b).count()
    } else {
        LBP_POINTS + 1
    }
}

/// Normalized code histogram over pixels at least `radius` from the border.
pub fn lbp_histogram(map: &Grid<f64>, radius: usize) -> [f64; LBP_BINS] {
    let (h, w) = map.dims();
    let mut hist = [0.0; LBP_BINS];
    if h <= 2 * radius || w <= 2 * radius {
        return hist;
    }
    let mut n = 0.0;
    for y in radius..h - radius {
        for x in radius..w - radius {
            hist[lbp_code(map, x, y, radius)] += 1.0;
            n += 1.0;
        }
    }
    hist.map(|v| v / n)
}

/// Ten-bin code histograms for every map and radius (90 values).
pub fn lbp_features(patch: &TexturePatch) -> FeatureVector {
    let mut labels = Vec::with_capacity(90);
    let mut values = Vec::with_capacity(90);
    for (map, name) in patch.maps.iter().zip(MAP_NAMES) {
        for radius in LBP_RADII {
            for (code, v) in lbp_histogram(map, radius).into_iter().enumerate() {
                labels.push(format!("lbp/{name}/r{radius}/{code}"));
                values.push(v);
            }
        }
    }
    FeatureVector {
        schema: "lbp".into(),
        labels,
        values,
    }
}
