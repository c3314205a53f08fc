//! Measurement physics of polarized light imaging.
//!
//! A pixel observed under a linear polarizer rotated to angle `rho` records
//! `I(rho) = I_T / 2 * (1 + sin(2 rho - 2 phi) * sin(delta))`. Transmittance
//! `I_T`, retardation `r = |sin delta|` and direction `phi` are the three
//! parameter maps every other module works with.
//!
//! Directions are stored in radians in the half-open range `[0, pi)` and are
//! measured in pixel coordinates: from the `+x` (column) axis towards the `+y`
//! (row) axis.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Retardation below this is treated as isotropic, with direction 0.
pub const ISOTROPIC_EPS: f64 = 1e-12;

/// Canonicalize an axial direction into `[0, pi)`.
#[inline]
pub fn canonical_direction(phi: f64) -> f64 {
    let v = phi.rem_euclid(PI);
    // rem_euclid may round up to exactly pi for tiny negative inputs
    if v >= PI {
        0.0
    } else {
        v
    }
}

/// Smallest absolute difference of two axial directions, in `[0, pi/2]`.
#[inline]
pub fn direction_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Co-registered transmittance, direction and retardation rasters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterMaps {
    pub transmittance: Grid<f64>,
    /// Radians in `[0, pi)`.
    pub direction: Grid<f64>,
    /// `|sin delta|` in `[0, 1]`.
    pub retardation: Grid<f64>,
    /// Incident light intensity `I_0`.
    pub incident: f64,
    /// In-plane pixel size in micrometres.
    pub pixel_size_um: f64,
    /// Optional foreground (tissue) mask.
    pub mask: Option<Grid<bool>>,
}

impl ParameterMaps {
    pub fn new(
        transmittance: Grid<f64>,
        direction: Grid<f64>,
        retardation: Grid<f64>,
        incident: f64,
        pixel_size_um: f64,
    ) -> Result<Self> {
        let maps = Self {
            transmittance,
            direction,
            retardation,
            incident,
            pixel_size_um,
            mask: None,
        };
        maps.validate()?;
        Ok(maps)
    }

    /// Uniform maps, mostly useful in tests.
    pub fn constant(
        height: usize,
        width: usize,
        transmittance: f64,
        direction: f64,
        retardation: f64,
        incident: f64,
    ) -> Self {
        Self {
            transmittance: Grid::filled(height, width, transmittance),
            direction: Grid::filled(height, width, canonical_direction(direction)),
            retardation: Grid::filled(height, width, retardation),
            incident,
            pixel_size_um: 1.3,
            mask: None,
        }
    }

    pub fn with_mask(mut self, mask: Grid<bool>) -> Self {
        self.mask = Some(mask);
        self
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.transmittance.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.transmittance.width()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.transmittance.dims()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.incident > 0.0 && self.incident.is_finite()) {
            return Err(Error::invalid("incident intensity must be positive"));
        }
        if !self.transmittance.same_dims(&self.direction) || !self.transmittance.same_dims(&self.retardation) {
            return Err(Error::shape(
                format!("{:?}", self.transmittance.dims()),
                format!("{:?} / {:?}", self.direction.dims(), self.retardation.dims()),
            ));
        }
        if let Some(mask) = &self.mask {
            if !mask.same_dims(&self.transmittance) {
                return Err(Error::shape(
                    format!("{:?}", self.transmittance.dims()),
                    format!("mask {:?}", mask.dims()),
                ));
            }
        }
        // small tolerance: recovered maps carry round-off
        let tol = 1e-9;
        for &t in self.transmittance.as_slice() {
            if !(t >= 0.0 && t <= self.incident * (1.0 + tol)) {
                return Err(Error::invalid(format!(
                    "transmittance {t} outside [0, {}]",
                    self.incident
                )));
            }
        }
        for &r in self.retardation.as_slice() {
            if !(-tol..=1.0 + tol).contains(&r) {
                return Err(Error::invalid(format!("retardation {r} outside [0, 1]")));
            }
        }
        for &p in self.direction.as_slice() {
            if !(p >= 0.0 && p < PI) {
                return Err(Error::invalid(format!("direction {p} outside [0, pi)")));
            }
        }
        Ok(())
    }

    /// Crop all rasters (and the mask) to a window.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        Ok(Self {
            transmittance: self.transmittance.crop(x0, y0, w, h)?,
            direction: self.direction.crop(x0, y0, w, h)?,
            retardation: self.retardation.crop(x0, y0, w, h)?,
            incident: self.incident,
            pixel_size_um: self.pixel_size_um,
            mask: match &self.mask {
                Some(m) => Some(m.crop(x0, y0, w, h)?),
                None => None,
            },
        })
    }

    /// Center crop to a square of `side` pixels.
    pub fn center_crop(&self, side: usize) -> Result<Self> {
        let (h, w) = self.dims();
        if side > h || side > w {
            return Err(Error::invalid(format!("center crop {side} larger than {w}x{h}")));
        }
        self.crop((w - side) / 2, (h - side) / 2, side, side)
    }
}

/// Transmitted intensities for every polarizer angle.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityStack {
    height: usize,
    width: usize,
    /// Polarizer rotations in degrees.
    angles_deg: Vec<f64>,
    /// Angle-major: `data[a * h * w + y * w + x]`.
    data: Vec<f64>,
}

/// The nine equidistant polarizer angles `0, 20, ..., 160` degrees.
pub fn default_angles() -> Vec<f64> {
    (0..9).map(|i| i as f64 * 20.0).collect()
}

impl IntensityStack {
    pub fn new(height: usize, width: usize, angles_deg: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * angles_deg.len() {
            return Err(Error::shape(height * width * angles_deg.len(), data.len()));
        }
        validate_angles(&angles_deg)?;
        if let Some(bad) = data.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid(format!("intensity {bad} is negative")));
        }
        Ok(Self {
            height,
            width,
            angles_deg,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access for noise injection; callers keep values non-negative.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Intensity profile of one pixel.
    pub fn profile(&self, x: usize, y: usize) -> Vec<f64> {
        let plane = self.height * self.width;
        let idx = y * self.width + x;
        (0..self.angles_deg.len()).map(|a| self.data[a * plane + idx]).collect()
    }

    /// One raster per polarizer angle.
    pub fn plane(&self, angle_index: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[angle_index * plane..(angle_index + 1) * plane]
    }
}

fn validate_angles(angles_deg: &[f64]) -> Result<()> {
    if angles_deg.len() < 3 {
        return Err(Error::invalid("need at least three polarizer angles"));
    }
    for (i, a) in angles_deg.iter().enumerate() {
        for b in &angles_deg[i + 1..] {
            let d = (a - b).rem_euclid(180.0);
            if d < 1e-9 || 180.0 - d < 1e-9 {
                return Err(Error::invalid(format!(
                    "polarizer angles {a} and {b} coincide modulo 180 degrees"
                )));
            }
        }
    }
    Ok(())
}

/// Optical constants of the setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    /// Birefringence `dn` (dimensionless).
    pub birefringence: f64,
    /// Wavelength in nanometres.
    pub wavelength_nm: f64,
    /// Nominal section thickness in micrometres.
    pub thickness_um: f64,
    /// Attenuation coefficient in 1/micrometre.
    pub attenuation_per_um: f64,
}

impl Default for OpticsConfig {
    /// Constants chosen so that the maximal phase retardation of a fully
    /// myelinated in-plane voxel stays below `pi / 2`, keeping `arcsin`
    /// invertible.
    fn default() -> Self {
        Self {
            birefringence: 0.002,
            wavelength_nm: 550.0,
            thickness_um: 60.0,
            attenuation_per_um: 0.02,
        }
    }
}

impl OpticsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [
            self.birefringence,
            self.wavelength_nm,
            self.thickness_um,
            self.attenuation_per_um,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("optics constants must be strictly positive"))
        }
    }

    /// Phase retardation `delta` for tissue thickness `t` (micrometres) and
    /// inclination `alpha` (radians).
    pub fn phase_retardation(&self, thickness_um: f64, inclination: f64) -> f64 {
        let wavelength_um = self.wavelength_nm * 1e-3;
        TAU * thickness_um * self.birefringence / wavelength_um * inclination.cos().powi(2)
    }
}

/// Ground-truth fiber geometry of one section.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberOrientationField {
    /// Radians in `[0, pi)`.
    pub direction: Grid<f64>,
    /// Radians in `[0, pi/2]`.
    pub inclination: Grid<f64>,
    /// Relative myelin density in `[0, 1]`.
    pub density: Grid<f64>,
}

impl FiberOrientationField {
    /// Forward model: density scales the birefringent thickness, which sets
    /// both attenuation (`I_T = I_0 exp(-mu t)`) and retardation.
    pub fn to_parameter_maps(&self, optics: &OpticsConfig, incident: f64, pixel_size_um: f64) -> Result<ParameterMaps> {
        optics.validate()?;
        let (h, w) = self.direction.dims();
        if !self.inclination.same_dims(&self.direction) || !self.density.same_dims(&self.direction) {
            return Err(Error::shape(
                format!("{h}x{w}"),
                "fiber field rasters of different sizes",
            ));
        }
        let mut transmittance = Grid::zeros(h, w);
        let mut retardation = Grid::zeros(h, w);
        for i in 0..h * w {
            let density = self.density.as_slice()[i].clamp(0.0, 1.0);
            let t = density * optics.thickness_um;
            transmittance.as_mut_slice()[i] = incident * (-optics.attenuation_per_um * t).exp();
            let delta = optics.phase_retardation(t, self.inclination.as_slice()[i]);
            retardation.as_mut_slice()[i] = delta.sin().abs();
        }
        ParameterMaps::new(
            transmittance,
            self.direction.map(|p| canonical_direction(*p)),
            retardation,
            incident,
            pixel_size_um,
        )
    }
}

/// Evaluate the intensity profile model for every pixel and angle.
pub fn synthesize_profile(maps: &ParameterMaps, angles_deg: &[f64]) -> Result<IntensityStack> {
    maps.validate()?;
    validate_angles(angles_deg)?;
    let (h, w) = maps.dims();
    let plane = h * w;
    let mut data = vec![0.0; plane * angles_deg.len()];
    let t = maps.transmittance.as_slice();
    let p = maps.direction.as_slice();
    let r = maps.retardation.as_slice();
    for (a, rho) in angles_deg.iter().enumerate() {
        let rho = rho.to_radians();
        let out = &mut data[a * plane..(a + 1) * plane];
        for i in 0..plane {
            out[i] = 0.5 * t[i] * (1.0 + (2.0 * rho - 2.0 * p[i]).sin() * r[i]);
        }
    }
    // max(0) guards round-off at r = 1 where the minimum touches zero
    for v in &mut data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    IntensityStack::new(h, w, angles_deg.to_vec(), data)
}

/// Options for harmonic recovery.
#[derive(Clone, Copy, Debug)]
pub struct RecoveryOptions {
    /// Pixels with `I_T` below `floor_fraction * I_0` are degenerate.
    pub floor_fraction: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self { floor_fraction: 1e-6 }
    }
}

/// Parameter maps plus the pixels whose transmittance fell below the floor.
#[derive(Clone, Debug)]
pub struct Recovery {
    pub maps: ParameterMaps,
    /// `true` where the profile was degenerate and `r`, `phi` were zeroed.
    pub degenerate: Grid<bool>,
}

impl Recovery {
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.as_slice().iter().filter(|d| **d).count()
    }
}

/// Least-squares fit of `a0 + a2 cos(2 rho) + b2 sin(2 rho)`. For equidistant
/// angles over 180 degrees this reduces to the discrete Fourier coefficients.
struct HarmonicFit {
    // rows of the 3 x n pseudo-inverse
    pinv: [Vec<f64>; 3],
}

impl HarmonicFit {
    fn new(angles_deg: &[f64]) -> Result<Self> {
        let n = angles_deg.len();
        let basis: Vec<[f64; 3]> = angles_deg
            .iter()
            .map(|a| {
                let t = 2.0 * a.to_radians();
                [1.0, t.cos(), t.sin()]
            })
            .collect();
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        for b in &basis {
            for i in 0..3 {
                for j in 0..3 {
                    ata[(i, j)] += b[i] * b[j];
                }
            }
        }
        let inv = ata
            .try_inverse()
            .ok_or_else(|| Error::invalid("polarizer angles do not determine the 2rho harmonic"))?;
        let mut pinv = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (k, b) in basis.iter().enumerate() {
            for i in 0..3 {
                pinv[i][k] = (0..3).map(|j| inv[(i, j)] * b[j]).sum();
            }
        }
        Ok(Self { pinv })
    }
}

/// Recover `I_T`, `r` and `phi` from intensity profiles.
pub fn recover_maps(stack: &IntensityStack, incident: f64) -> Result<Recovery> {
    recover_maps_with(stack, incident, 1.3, RecoveryOptions::default())
}

pub fn recover_maps_with(
    stack: &IntensityStack,
    incident: f64,
    pixel_size_um: f64,
    options: RecoveryOptions,
) -> Result<Recovery> {
    if !(incident > 0.0) {
        return Err(Error::invalid("incident intensity must be positive"));
    }
    let fit = HarmonicFit::new(&stack.angles_deg)?;
    let (h, w) = (stack.height, stack.width);
    let plane = h * w;
    let n = stack.angles_deg.len();
    let floor = options.floor_fraction * incident;

    let mut transmittance = Grid::zeros(h, w);
    let mut direction = Grid::zeros(h, w);
    let mut retardation = Grid::zeros(h, w);
    let mut degenerate = Grid::filled(h, w, false);

    for i in 0..plane {
        let (mut a0, mut a2, mut b2) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let v = stack.data[k * plane + i];
            a0 += fit.pinv[0][k] * v;
            a2 += fit.pinv[1][k] * v;
            b2 += fit.pinv[2][k] * v;
        }
        let it = (2.0 * a0).clamp(0.0, incident);
        transmittance.as_mut_slice()[i] = it;
        if it < floor {
            degenerate.as_mut_slice()[i] = true;
            continue;
        }
        // I = I_T/2 + (I_T r / 2)(sin 2rho cos 2phi - cos 2rho sin 2phi)
        let amplitude = a2.hypot(b2);
        let r = (2.0 * amplitude / it).min(1.0);
        if r < ISOTROPIC_EPS {
            continue;
        }
        retardation.as_mut_slice()[i] = r;
        direction.as_mut_slice()[i] = canonical_direction(0.5 * (-a2).atan2(b2));
    }

    Ok(Recovery {
        maps: ParameterMaps {
            transmittance,
            direction,
            retardation,
            incident,
            pixel_size_um,
            mask: None,
        },
        degenerate,
    })
}

/// Birefringent thickness implied by attenuation, as a fraction of the
/// nominal section thickness, times that thickness.
pub fn birefringent_thickness(transmittance: f64, incident: f64, optics: &OpticsConfig) -> f64 {
    let ratio = incident / transmittance;
    let fraction = ratio.ln() / (optics.attenuation_per_um * optics.thickness_um);
    let fraction = if fraction.is_nan() { 1.0 } else { fraction };
    optics.thickness_um * fraction.clamp(0.0, 1.0)
}

/// Fiber inclination in radians, `[0, pi/2]`.
pub fn estimate_inclination(maps: &ParameterMaps, optics: &OpticsConfig) -> Result<Grid<f64>> {
    maps.validate()?;
    optics.validate()?;
    let wavelength_um = optics.wavelength_nm * 1e-3;
    let out = maps
        .transmittance
        .as_slice()
        .iter()
        .zip(maps.retardation.as_slice())
        .map(|(&it, &r)| {
            let t_hat = birefringent_thickness(it, maps.incident, optics);
            if t_hat <= 0.0 {
                return FRAC_PI_2;
            }
            let delta = r.clamp(0.0, 1.0).asin();
            let cos2 = delta * wavelength_um / (TAU * t_hat * optics.birefringence);
            cos2.sqrt().min(1.0).acos()
        })
        .collect();
    Grid::from_vec(maps.height(), maps.width(), out)
}

/// HSV fiber orientation map: hue from `2 phi`, saturation = value = `cos alpha`.
pub fn render_fom(maps: &ParameterMaps, inclination: &Grid<f64>) -> Result<Grid<[u8; 3]>> {
    if !inclination.same_dims(&maps.direction) {
        return Err(Error::shape(
            format!("{:?}", maps.dims()),
            format!("{:?}", inclination.dims()),
        ));
    }
    let out = maps
        .direction
        .as_slice()
        .iter()
        .zip(inclination.as_slice())
        .map(|(&phi, &alpha)| {
            let hue = (2.0 * phi).rem_euclid(TAU) / TAU;
            let sv = alpha.cos().clamp(0.0, 1.0);
            hsv_to_rgb(hue, sv, sv)
        })
        .collect();
    Grid::from_vec(maps.height(), maps.width(), out)
}

/// `h`, `s`, `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = (h6.floor() as usize) % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let to_u8 = |c: f64| (c.clamp(0.0, 1.0) * 255.0).round() as u8;
    [to_u8(r), to_u8(g), to_u8(b)]
}

/// Encoder input channels `(I_T, r cos 2phi, r sin 2phi)`, channel-major.
pub fn stack_channels(maps: &ParameterMaps) -> [Grid<f64>; 3] {
    let (h, w) = maps.dims();
    let mut c1 = Grid::zeros(h, w);
    let mut c2 = Grid::zeros(h, w);
    let r = maps.retardation.as_slice();
    let p = maps.direction.as_slice();
    for i in 0..h * w {
        let (s, c) = (2.0 * p[i]).sin_cos();
        c1.as_mut_slice()[i] = r[i] * c;
        c2.as_mut_slice()[i] = r[i] * s;
    }
    [maps.transmittance.clone(), c1, c2]
}
