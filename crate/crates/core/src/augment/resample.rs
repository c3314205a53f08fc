//! Resampling of parameter maps through the linear intensity representation.
//!
//! Interpolating `I_T`, `r` and `phi` directly is wrong: only the measured
//! intensities combine linearly. A weighted mean of intensity profiles maps to
//!
//! ```text
//! I_T'              = sum_i w_i I_T,i
//! r' exp(2 i phi')  = sum_i w_i r_i I_T,i exp(2 i phi_i) / I_T'
//! ```
//!
//! which is what every geometric transform and filter in this crate uses.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::{canonical_direction, ParameterMaps, ISOTROPIC_EPS};

/// One pixel expressed in the linear (phasor) form.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Phasor {
    pub transmittance: f64,
    pub re: f64,
    pub im: f64,
}

impl Phasor {
    #[inline]
    pub fn from_params(transmittance: f64, retardation: f64, direction: f64) -> Self {
        let (s, c) = (2.0 * direction).sin_cos();
        let amp = retardation * transmittance;
        Self {
            transmittance,
            re: amp * c,
            im: amp * s,
        }
    }

    /// Back to `(I_T, r, phi)`; zero transmittance yields `r = phi = 0`.
    #[inline]
    pub fn to_params(self) -> (f64, f64, f64) {
        if self.transmittance <= 0.0 {
            return (self.transmittance.max(0.0), 0.0, 0.0);
        }
        let r = (self.re.hypot(self.im) / self.transmittance).clamp(0.0, 1.0);
        if r < ISOTROPIC_EPS {
            return (self.transmittance, 0.0, 0.0);
        }
        let phi = canonical_direction(0.5 * self.im.atan2(self.re));
        (self.transmittance, r, phi)
    }

    #[inline]
    pub fn scaled_add(&mut self, w: f64, other: Phasor) {
        self.transmittance += w * other.transmittance;
        self.re += w * other.re;
        self.im += w * other.im;
    }
}

/// Combine weighted source samples `(w, I_T, r, phi)` into one pixel.
///
/// A lone sample of weight exactly one is passed through untouched so that
/// integer-aligned transforms reproduce their input bit for bit.
pub fn resample_point<I>(samples: I) -> (f64, f64, f64)
where
    I: IntoIterator<Item = (f64, f64, f64, f64)>,
{
    let mut acc = Phasor::default();
    let mut nonzero = 0usize;
    let mut last = (0.0, 0.0, 0.0, 0.0);
    for s in samples {
        let (w, t, r, p) = s;
        if w == 0.0 {
            continue;
        }
        nonzero += 1;
        last = s;
        acc.scaled_add(w, Phasor::from_params(t, r, p));
    }
    if nonzero == 1 && last.0 == 1.0 {
        return (last.1, last.2, last.3);
    }
    acc.to_params()
}

/// Resample maps with explicit per-target weights. `targets[k]` lists the
/// `(source_index, weight)` pairs of output pixel `k` (row-major in an
/// `out_h x out_w` raster); weights must be non-negative and sum to one.
pub fn resample(
    maps: &ParameterMaps,
    targets: &[Vec<(usize, f64)>],
    out_h: usize,
    out_w: usize,
) -> Result<ParameterMaps> {
    if targets.len() != out_h * out_w {
        return Err(Error::shape(out_h * out_w, targets.len()));
    }
    let n = maps.height() * maps.width();
    let t = maps.transmittance.as_slice();
    let r = maps.retardation.as_slice();
    let p = maps.direction.as_slice();
    let mut ot = Vec::with_capacity(targets.len());
    let mut or = Vec::with_capacity(targets.len());
    let mut op = Vec::with_capacity(targets.len());
    for weights in targets {
        let mut total = 0.0;
        for &(idx, w) in weights {
            if idx >= n {
                return Err(Error::invalid(format!("source index {idx} out of range")));
            }
            if !(w >= 0.0) {
                return Err(Error::invalid(format!("negative weight {w}")));
            }
            total += w;
        }
        if !weights.is_empty() && (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        let (a, b, c) = resample_point(weights.iter().map(|&(i, w)| (w, t[i], r[i], p[i])));
        ot.push(a);
        or.push(b);
        op.push(c);
    }
    Ok(ParameterMaps {
        transmittance: Grid::from_vec(out_h, out_w, ot)?,
        direction: Grid::from_vec(out_h, out_w, op)?,
        retardation: Grid::from_vec(out_h, out_w, or)?,
        incident: maps.incident,
        pixel_size_um: maps.pixel_size_um,
        mask: None,
    })
}
