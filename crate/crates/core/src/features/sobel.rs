//! Sobel gradient magnitude of an axial direction field.

use crate::grid::{reflect, Grid};

const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const KY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Edge strength of a direction map in `[0, 1]`.
///
/// Directions are lifted to unit phasors `exp(2i phi)` so that 0 and 180
/// degrees coincide; the summed x and y Sobel responses are divided by 12,
/// the absolute weight sum of the combined kernel. Borders are mirrored.
pub fn circular_sobel(phi: &Grid<f64>) -> Grid<f64> {
    let (h, w) = phi.dims();
    let re = phi.map(|p| (2.0 * p).cos());
    let im = phi.map(|p| (2.0 * p).sin());
    Grid::from_fn(h, w, |x, y| {
        let (mut gr, mut gi) = (0.0, 0.0);
        for (ky, (rx, ry)) in KX.iter().zip(KY.iter()).enumerate() {
            let sy = reflect(y as isize + ky as isize - 1, h);
            for kx in 0..3 {
                let sx = reflect(x as isize + kx as isize - 1, w);
                let k = rx[kx] + ry[kx];
                gr += k * re.get(sx, sy);
                gi += k * im.get(sx, sy);
            }
        }
        (gr.hypot(gi) / 12.0).min(1.0)
    })
}
