//! Geometric transforms with direction correction.
//!
//! A transform `f` moving source pixel coordinates to target coordinates
//! rotates fiber directions along with the tissue. Each direction is mapped
//! through the Jacobian of `f` before resampling: `d' = J_f (cos phi, sin phi)`,
//! `phi' = atan2(d'_y, d'_x)`.

use serde::{Deserialize, Serialize};

use super::resample::{resample_point, Phasor};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::{canonical_direction, ParameterMaps};

const SINGULAR_EPS: f64 = 1e-12;

/// Row-major 2x2 matrix acting on `(x, y)` pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn diag(a: f64, b: f64) -> Self {
        Mat2([[a, 0.0], [0.0, b]])
    }

    /// Rotation by `theta` radians (from `+x` towards `+y`).
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2([[c, -s], [s, c]])
    }

    /// Shear with `x += tan(sx) * y` and `y += tan(sy) * x`.
    pub fn shear(sx: f64, sy: f64) -> Self {
        Mat2([[1.0, sx.tan()], [sy.tan(), 1.0]])
    }

    #[inline]
    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.abs() < SINGULAR_EPS || !det.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Mat2([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]))
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        (m[0][0] * x + m[0][1] * y, m[1][0] * x + m[1][1] * y)
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &other.0;
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Map one direction through a Jacobian. Returns `None` for singular `J`.
#[inline]
pub fn correct_direction_value(phi: f64, jacobian: &Mat2) -> Option<f64> {
    if jacobian.det().abs() < SINGULAR_EPS {
        return None;
    }
    if jacobian.is_identity() {
        return Some(phi);
    }
    let (s, c) = phi.sin_cos();
    let (dx, dy) = jacobian.apply(c, s);
    Some(canonical_direction(dy.atan2(dx)))
}

/// Direction raster corrected by a per-pixel Jacobian.
#[derive(Clone, Debug)]
pub struct CorrectedDirections {
    pub direction: Grid<f64>,
    /// Pixels whose Jacobian was singular; their direction is unchanged.
    pub singular: Grid<bool>,
}

pub fn correct_direction(direction: &Grid<f64>, jacobian: impl Fn(usize, usize) -> Mat2) -> CorrectedDirections {
    let (h, w) = direction.dims();
    let mut singular = Grid::filled(h, w, false);
    let mut out = direction.clone();
    for y in 0..h {
        for x in 0..w {
            let phi = *direction.get(x, y);
            match correct_direction_value(phi, &jacobian(x, y)) {
                Some(v) => out.set(x, y, v),
                None => singular.set(x, y, true),
            }
        }
    }
    CorrectedDirections {
        direction: out,
        singular,
    }
}

/// `f(p) = A p + t`, mapping source pixel coordinates to target coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub matrix: Mat2,
    pub translation: [f64; 2],
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        matrix: Mat2::IDENTITY,
        translation: [0.0, 0.0],
    };

    /// The transform applying `matrix` about `src_center`, landing on `dst_center`.
    pub fn about_centers(matrix: Mat2, src_center: (f64, f64), dst_center: (f64, f64)) -> Self {
        let (ax, ay) = matrix.apply(src_center.0, src_center.1);
        Affine {
            matrix,
            translation: [dst_center.0 - ax, dst_center.1 - ay],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.is_identity() && self.translation == [0.0, 0.0]
    }
}

/// Result of a geometric warp.
#[derive(Clone, Debug)]
pub struct Warped {
    pub maps: ParameterMaps,
    /// `false` where the target pixel fell outside the source raster
    /// (such pixels are zero-filled).
    pub in_domain: Grid<bool>,
    /// Target pixels whose local Jacobian was singular.
    pub singular: usize,
}

impl Warped {
    pub fn fully_in_domain(&self) -> bool {
        self.in_domain.as_slice().iter().all(|v| *v)
    }

    fn unwarped(maps: ParameterMaps) -> Self {
        let (h, w) = maps.dims();
        Self {
            maps,
            in_domain: Grid::filled(h, w, true),
            singular: 0,
        }
    }
}

// positions this close outside the raster are snapped onto its border
pub(crate) const DOMAIN_EPS: f64 = 1e-9;

/// Lazily corrected source phasors for a constant Jacobian. The corrected
/// double-angle phasor of `J (cos phi, sin phi) = (a, b)` is
/// `((a^2 - b^2), 2ab) / (a^2 + b^2)`, so no inverse trigonometry is needed
/// until a direction is passed through on its own.
struct CorrectedSource {
    jac: Mat2,
    singular: bool,
    phasor: Vec<Option<Phasor>>,
}

impl CorrectedSource {
    fn new(len: usize, jac: Mat2) -> Self {
        Self {
            jac,
            singular: jac.det().abs() < SINGULAR_EPS,
            phasor: vec![None; len],
        }
    }

    fn get(&mut self, i: usize, t: f64, r: f64, phi: f64) -> Phasor {
        if let Some(p) = self.phasor[i] {
            return p;
        }
        let p = if self.singular || self.jac.is_identity() {
            Phasor::from_params(t, r, phi)
        } else {
            let (s, c) = phi.sin_cos();
            let (a, b) = self.jac.apply(c, s);
            let n2 = a * a + b * b;
            let amp = r * t;
            Phasor {
                transmittance: t,
                re: amp * (a * a - b * b) / n2,
                im: amp * 2.0 * a * b / n2,
            }
        };
        self.phasor[i] = Some(p);
        p
    }
}

/// Core pull-warp: for each target pixel, `locate` returns the source
/// position and the Jacobian of the forward map there. A `constant` Jacobian
/// lets the direction correction run once per source pixel.
fn warp_with(
    maps: &ParameterMaps,
    out_h: usize,
    out_w: usize,
    constant: Option<Mat2>,
    locate: impl Fn(usize, usize) -> ((f64, f64), Mat2),
) -> Warped {
    let (h, w) = maps.dims();
    let mut t_out = Grid::zeros(out_h, out_w);
    let mut r_out = Grid::zeros(out_h, out_w);
    let mut p_out = Grid::zeros(out_h, out_w);
    let mut in_domain = Grid::filled(out_h, out_w, false);
    let mut mask_out = maps.mask.as_ref().map(|_| Grid::filled(out_h, out_w, false));
    let mut singular = 0usize;

    let t = &maps.transmittance;
    let r = &maps.retardation;
    let p = &maps.direction;
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let mut cache = constant.map(|jac| CorrectedSource::new(h * w, jac));

    for ty in 0..out_h {
        for tx in 0..out_w {
            let ((sx, sy), jac) = locate(tx, ty);
            if !(sx >= -DOMAIN_EPS && sy >= -DOMAIN_EPS && sx <= max_x + DOMAIN_EPS && sy <= max_y + DOMAIN_EPS) {
                continue;
            }
            let (sx, sy) = (sx.clamp(0.0, max_x), sy.clamp(0.0, max_y));
            in_domain.set(tx, ty, true);
            let x0 = (sx.floor() as usize).min(w.saturating_sub(2));
            let y0 = (sy.floor() as usize).min(h.saturating_sub(2));
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x1, y0, fx * (1.0 - fy)),
                (x0, y1, (1.0 - fx) * fy),
                (x1, y1, fx * fy),
            ];
            let is_singular = jac.det().abs() < SINGULAR_EPS;
            if is_singular {
                singular += 1;
            }
            let (a, b, c) = match cache.as_mut() {
                Some(src) => {
                    let mut acc = Phasor::default();
                    let mut nonzero = 0usize;
                    let mut last = (0, 0.0);
                    for &(x, y, wgt) in &taps {
                        if wgt == 0.0 {
                            continue;
                        }
                        let i = y * w + x;
                        nonzero += 1;
                        last = (i, wgt);
                        let ph = src.get(i, t.as_slice()[i], r.as_slice()[i], p.as_slice()[i]);
                        acc.scaled_add(wgt, ph);
                    }
                    if nonzero == 1 && last.1 == 1.0 {
                        let i = last.0;
                        let phi = p.as_slice()[i];
                        let phi = if src.singular {
                            phi
                        } else {
                            correct_direction_value(phi, &src.jac).unwrap_or(phi)
                        };
                        (t.as_slice()[i], r.as_slice()[i], phi)
                    } else {
                        acc.to_params()
                    }
                }
                None => resample_point(taps.iter().map(|&(x, y, wgt)| {
                    let phi = *p.get(x, y);
                    let phi = if is_singular {
                        phi
                    } else {
                        correct_direction_value(phi, &jac).unwrap_or(phi)
                    };
                    (wgt, *t.get(x, y), *r.get(x, y), phi)
                })),
            };
            t_out.set(tx, ty, a);
            r_out.set(tx, ty, b);
            p_out.set(tx, ty, c);
            if let (Some(src), Some(dst)) = (&maps.mask, mask_out.as_mut()) {
                let best = taps
                    .iter()
                    .fold(taps[0], |acc, tap| if tap.2 > acc.2 { *tap } else { acc });
                dst.set(tx, ty, *src.get(best.0, best.1));
            }
        }
    }

    Warped {
        maps: ParameterMaps {
            transmittance: t_out,
            direction: p_out,
            retardation: r_out,
            incident: maps.incident,
            pixel_size_um: maps.pixel_size_um,
            mask: mask_out,
        },
        in_domain,
        singular,
    }
}

/// Affine warp onto a raster of the same size as the input.
pub fn apply_affine(maps: &ParameterMaps, affine: &Affine) -> Result<Warped> {
    let (h, w) = maps.dims();
    apply_affine_into(maps, affine, h, w)
}

/// Affine warp onto an `out_h x out_w` target raster.
pub fn apply_affine_into(maps: &ParameterMaps, affine: &Affine, out_h: usize, out_w: usize) -> Result<Warped> {
    let inv = affine
        .matrix
        .inverse()
        .ok_or(Error::SingularMatrix(affine.matrix.det()))?;
    if affine.is_identity() && maps.dims() == (out_h, out_w) {
        return Ok(Warped::unwarped(maps.clone()));
    }
    let [tx, ty] = affine.translation;
    let jac = affine.matrix;
    Ok(warp_with(maps, out_h, out_w, Some(jac), |x, y| {
        (inv.apply(x as f64 - tx, y as f64 - ty), jac)
    }))
}

/// Dense pull field: target pixel `q` is read from source position `q + u(q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    pub dx: Grid<f64>,
    pub dy: Grid<f64>,
}

impl DisplacementField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            dx: Grid::zeros(height, width),
            dy: Grid::zeros(height, width),
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let dx = Grid::from_fn(height, width, |x, y| f(x as f64, y as f64).0);
        let dy = Grid::from_fn(height, width, |x, y| f(x as f64, y as f64).1);
        Self { dx, dy }
    }

    /// The pull field of a forward affine map: `u(q) = A^-1 (q - t) - q`.
    pub fn from_affine(height: usize, width: usize, affine: &Affine) -> Result<Self> {
        let inv = affine
            .matrix
            .inverse()
            .ok_or(Error::SingularMatrix(affine.matrix.det()))?;
        let [tx, ty] = affine.translation;
        Ok(Self::from_fn(height, width, |x, y| {
            let (sx, sy) = inv.apply(x - tx, y - ty);
            (sx - x, sy - y)
        }))
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dx.dims()
    }

    /// Source position for a (possibly fractional) target position.
    pub fn map_point(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        Some((x + self.dx.bilinear(x, y)?, y + self.dy.bilinear(x, y)?))
    }

    pub fn max_magnitude(&self) -> f64 {
        self.dx
            .as_slice()
            .iter()
            .zip(self.dy.as_slice())
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// Jacobian of the pull map `g(q) = q + u(q)` by central differences
    /// (one-sided at the border).
    pub fn pull_jacobian(&self, x: usize, y: usize) -> Mat2 {
        let (h, w) = self.dims();
        let deriv = |g: &Grid<f64>, along_x: bool| -> f64 {
            let (n, i) = if along_x { (w, x) } else { (h, y) };
            if n == 1 {
                return 0.0;
            }
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let (va, vb) = if along_x {
                (*g.get(a, y), *g.get(b, y))
            } else {
                (*g.get(x, a), *g.get(x, b))
            };
            (vb - va) / (b - a) as f64
        };
        Mat2([
            [1.0 + deriv(&self.dx, true), deriv(&self.dx, false)],
            [deriv(&self.dy, true), 1.0 + deriv(&self.dy, false)],
        ])
    }
}

/// Non-linear warp by a dense pull field of the same raster size. The forward
/// Jacobian used for direction correction is the inverse of the pull map's
/// Jacobian at each target pixel.
pub fn apply_warp(maps: &ParameterMaps, field: &DisplacementField) -> Result<Warped> {
    if field.dims() != maps.dims() {
        return Err(Error::shape(
            format!("{:?}", maps.dims()),
            format!("field {:?}", field.dims()),
        ));
    }
    let (h, w) = maps.dims();
    let zero_degenerate = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    Ok(warp_with(maps, h, w, None, |x, y| {
        let src = (x as f64 + *field.dx.get(x, y), y as f64 + *field.dy.get(x, y));
        let forward = field.pull_jacobian(x, y).inverse().unwrap_or(zero_degenerate);
        (src, forward)
    }))
}

/// Mirror the maps; a single-axis flip reflects directions (`phi -> pi - phi`).
pub fn apply_flip(maps: &ParameterMaps, horizontal: bool, vertical: bool) -> ParameterMaps {
    let mut out = maps.clone();
    if horizontal {
        out.transmittance = out.transmittance.flip_horizontal();
        out.retardation = out.retardation.flip_horizontal();
        out.direction = out.direction.flip_horizontal();
        out.mask = out.mask.map(|m| m.flip_horizontal());
    }
    if vertical {
        out.transmittance = out.transmittance.flip_vertical();
        out.retardation = out.retardation.flip_vertical();
        out.direction = out.direction.flip_vertical();
        out.mask = out.mask.map(|m| m.flip_vertical());
    }
    if horizontal != vertical {
        for p in out.direction.as_mut_slice() {
            *p = canonical_direction(std::f64::consts::PI - *p);
        }
    }
    out
}
