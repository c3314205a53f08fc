use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::OpticsConfig;

/// Fine-scale density modulation of a primitive. A fresh realization is drawn
/// for every section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSpec {
    /// Relative amplitude of stripes running along the fibers.
    pub stripe_amplitude: f64,
    /// Stripe periods across the fibers, in pixels.
    pub stripe_periods_px: Vec<f64>,
    /// Relative amplitude of the slow modulation along the fibers.
    pub streak_amplitude: f64,
    pub streak_period_px: f64,
    /// Relative standard deviation of per-pixel density noise.
    pub grain: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            stripe_amplitude: 0.3,
            stripe_periods_px: vec![5.0, 8.0, 13.0],
            streak_amplitude: 0.1,
            streak_period_px: 40.0,
            grain: 0.05,
        }
    }
}

/// Ring of radial (cortex) or tangential fibers around `center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annulus {
    pub center: [f64; 2],
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Tilt of the ring surface against the section normal; radii change
    /// across sections accordingly.
    #[serde(default)]
    pub tilt_deg: f64,
    /// Density at the outer and at the inner boundary, linear in between.
    pub density: [f64; 2],
    #[serde(default)]
    pub inclination_deg: f64,
    #[serde(default)]
    pub texture: TextureSpec,
}

/// Straight rectangular bundle; fibers run along `angle_deg`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub center: [f64; 2],
    pub length: f64,
    pub width: f64,
    pub angle_deg: f64,
    pub density: f64,
    #[serde(default)]
    pub inclination_deg: f64,
    #[serde(default)]
    pub texture: TextureSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    Rect {
        center: [f64; 2],
        length: f64,
        width: f64,
        angle_deg: f64,
    },
}

/// Cells of crossing fiber populations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crossing {
    pub region: Shape,
    /// Only claims pixels no other primitive covers.
    #[serde(default)]
    pub fill: bool,
    /// Population directions; uniformly random per cell when empty.
    #[serde(default)]
    pub directions_deg: Vec<f64>,
    pub cell_px: f64,
    pub density: f64,
    #[serde(default)]
    pub inclination_deg: f64,
    #[serde(default)]
    pub texture: TextureSpec,
}

/// Fibers diverging from `apex` inside a circular sector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fan {
    pub apex: [f64; 2],
    pub angle_deg: f64,
    /// Full opening angle.
    pub spread_deg: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub density: f64,
    #[serde(default)]
    pub inclination_deg: f64,
    #[serde(default)]
    pub texture: TextureSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    CortexBand(Annulus),
    TangentialBand(Annulus),
    Bundle(Bundle),
    Crossing(Crossing),
    Fan(Fan),
}

/// Coarse tissue class of a voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tissue {
    Background = 0,
    Gray = 1,
    White = 2,
}

impl Primitive {
    pub fn tissue(&self) -> Tissue {
        match self {
            Primitive::CortexBand(_) | Primitive::TangentialBand(_) => Tissue::Gray,
            _ => Tissue::White,
        }
    }

    pub fn is_fill(&self) -> bool {
        matches!(self, Primitive::Crossing(c) if c.fill)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Primitive::CortexBand(_) => "cortex_band",
            Primitive::TangentialBand(_) => "tangential_band",
            Primitive::Bundle(_) => "bundle",
            Primitive::Crossing(_) => "crossing",
            Primitive::Fan(_) => "fan",
        }
    }

    fn texture(&self) -> &TextureSpec {
        match self {
            Primitive::CortexBand(a) | Primitive::TangentialBand(a) => &a.texture,
            Primitive::Bundle(b) => &b.texture,
            Primitive::Crossing(c) => &c.texture,
            Primitive::Fan(f) => &f.texture,
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let incl = |v: f64| (0.0..=90.0).contains(&v);
        let ok = match self {
            Primitive::CortexBand(a) | Primitive::TangentialBand(a) => {
                a.inner_radius >= 0.0
                    && a.outer_radius > a.inner_radius
                    && a.density.iter().all(|d| unit(*d))
                    && incl(a.inclination_deg)
                    && a.tilt_deg.abs() < 90.0
            }
            Primitive::Bundle(b) => pos(b.length) && pos(b.width) && unit(b.density) && incl(b.inclination_deg),
            Primitive::Crossing(c) => {
                let shape_ok = match c.region {
                    Shape::Disk { radius, .. } => pos(radius),
                    Shape::Rect { length, width, .. } => pos(length) && pos(width),
                };
                shape_ok && pos(c.cell_px) && unit(c.density) && incl(c.inclination_deg)
            }
            Primitive::Fan(f) => {
                f.inner_radius >= 0.0
                    && f.outer_radius > f.inner_radius
                    && pos(f.spread_deg)
                    && f.spread_deg < 360.0
                    && unit(f.density)
                    && incl(f.inclination_deg)
            }
        };
        let t = self.texture();
        let texture_ok = t.stripe_amplitude >= 0.0
            && t.streak_amplitude >= 0.0
            && t.grain >= 0.0
            && pos(t.streak_period_px)
            && t.stripe_periods_px.iter().all(|p| pos(*p));
        if ok && texture_ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid {} geometry or texture", self.name())))
        }
    }
}

/// Per-section acquisition variation and measurement noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation of additive intensity noise, relative to `I_0`.
    pub intensity_std: f64,
    /// `log2` range of the per-section attenuation scale.
    pub attenuation_log2: [f64; 2],
    /// `log2` range of the per-section thickness scale.
    pub thickness_log2: [f64; 2],
    /// Largest rigid in-plane shift in pixels.
    pub shift_px: f64,
    /// Largest rigid in-plane rotation in degrees.
    pub rotation_deg: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            intensity_std: 0.01,
            attenuation_log2: [-0.1, 0.1],
            thickness_log2: [-0.1, 0.1],
            shift_px: 2.0,
            rotation_deg: 0.0,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            intensity_std: 0.0,
            attenuation_log2: [0.0, 0.0],
            thickness_log2: [0.0, 0.0],
            shift_px: 0.0,
            rotation_deg: 0.0,
        }
    }
}

/// Text-configurable description of a synthetic section stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub sections: usize,
    pub spacing_um: f64,
    pub pixel_size_um: f64,
    pub incident: f64,
    /// Number of equidistant polarizer angles over 180 degrees.
    pub angles: usize,
    pub optics: OpticsConfig,
    /// Mask pixels outside every primitive as background.
    pub mask_background: bool,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub primitives: Vec<Primitive>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            sections: 3,
            spacing_um: 60.0,
            pixel_size_um: 5.2,
            incident: 1.0,
            angles: 18,
            optics: OpticsConfig::default(),
            mask_background: true,
            noise: NoiseSpec::default(),
            seed: 0,
            primitives: Vec::new(),
        }
    }
}

impl PhantomSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("phantom spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.sections == 0 {
            return Err(Error::invalid(
                "phantom needs a non-empty raster and at least one section",
            ));
        }
        if !(self.spacing_um > 0.0 && self.pixel_size_um > 0.0 && self.incident > 0.0) {
            return Err(Error::invalid(
                "spacing, pixel size and incident intensity must be positive",
            ));
        }
        if self.angles < 3 {
            return Err(Error::invalid("at least three polarizer angles"));
        }
        self.optics.validate()?;
        let n = &self.noise;
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r.iter().all(|v| v.is_finite());
        if !(n.intensity_std >= 0.0 && n.shift_px >= 0.0 && n.rotation_deg >= 0.0)
            || !ordered(n.attenuation_log2)
            || !ordered(n.thickness_log2)
        {
            return Err(Error::invalid("noise levels must be non-negative with ordered ranges"));
        }
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    pub fn angles_deg(&self) -> Vec<f64> {
        (0..self.angles)
            .map(|i| i as f64 * 180.0 / self.angles as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let spec = PhantomSpec {
            primitives: vec![
                Primitive::Bundle(Bundle {
                    center: [10.0, 20.0],
                    length: 30.0,
                    width: 8.0,
                    angle_deg: 45.0,
                    density: 0.7,
                    inclination_deg: 10.0,
                    texture: TextureSpec::default(),
                }),
                Primitive::Crossing(Crossing {
                    region: Shape::Disk {
                        center: [5.0, 5.0],
                        radius: 4.0,
                    },
                    fill: true,
                    directions_deg: vec![0.0, 90.0],
                    cell_px: 6.0,
                    density: 0.5,
                    inclination_deg: 0.0,
                    texture: TextureSpec::default(),
                }),
            ],
            ..Default::default()
        };
        assert_eq!(PhantomSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let text = "width = 64\nheight = 32\n[[primitives]]\nkind = \"bundle\"\ncenter = [32.0, 16.0]\nlength = 40.0\nwidth = 10.0\nangle_deg = 0.0\ndensity = 0.8\n";
        let spec = PhantomSpec::from_toml(text).unwrap();
        assert_eq!(spec.primitives.len(), 1);
        assert_eq!(spec.sections, 3);
        assert!(PhantomSpec::from_toml("width = 0").is_err());
        assert!(PhantomSpec::from_toml("colour = 1").is_err());
    }
}
