//! TOML stack manifest referencing per-section rasters.
//!
//! ```toml
//! version = 1
//! pixel_size_um = 5.2
//! spacing_um = 60.0
//! incident = 1.0
//!
//! [[sections]]
//! id = "s000"
//! split = "train"
//! intensity = "s000/intensity.plir"      # optional, one channel per angle
//! transmittance = "s000/transmittance.plir"
//! direction = "s000/direction.plir"      # radians
//! retardation = "s000/retardation.plir"
//! mask = "s000/mask.plir"                # optional, u8
//! displacement = "s000/displacement.plir" # optional, channels dx, dy
//! truth = "s000/truth.plir"              # optional phantom ground truth
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::raster::{RasterContainer, RasterData};
use crate::augment::DisplacementField;
use crate::context::{Section, SectionStack};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::{canonical_direction, IntensityStack, ParameterMaps};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    None,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionEntry {
    pub id: String,
    #[serde(default)]
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmittance: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retardation: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

impl SectionEntry {
    pub fn has_maps(&self) -> bool {
        self.transmittance.is_some() && self.direction.is_some() && self.retardation.is_some()
    }

    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        [
            &self.intensity,
            &self.transmittance,
            &self.direction,
            &self.retardation,
            &self.mask,
            &self.displacement,
            &self.truth,
        ]
        .into_iter()
        .flatten()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackManifest {
    pub version: u32,
    pub pixel_size_um: f64,
    pub spacing_um: f64,
    #[serde(default = "one")]
    pub incident: f64,
    pub sections: Vec<SectionEntry>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base: PathBuf,
}

fn one() -> f64 {
    1.0
}

pub fn angle_channel_name(deg: f64) -> String {
    format!("rho_deg={deg}")
}

fn parse_angle(name: &str) -> Result<f64> {
    name.strip_prefix("rho_deg=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format(format!("intensity channel {name:?} does not name an angle")))
}

impl StackManifest {
    pub fn new(base: impl Into<PathBuf>, pixel_size_um: f64, spacing_um: f64, incident: f64) -> Self {
        Self {
            version: MANIFEST_VERSION,
            pixel_size_um,
            spacing_um,
            incident,
            sections: Vec::new(),
            base: base.into(),
        }
    }

    pub fn from_toml(text: &str, base: impl Into<PathBuf>) -> Result<Self> {
        let mut m: Self = toml::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", m.version)));
        }
        if !(m.pixel_size_um > 0.0 && m.spacing_um > 0.0 && m.incident > 0.0) {
            return Err(Error::Format(
                "pixel size, spacing and incident intensity must be positive".into(),
            ));
        }
        m.base = base.into();
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest fields are always representable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.base.join(rel)
    }

    pub fn section(&self, id: &str) -> Option<&SectionEntry> {
        self.sections.iter().find(|s| s.id == id)
    }

    /// Every referenced file exists and all rasters share one size.
    pub fn check(&self) -> Result<(usize, usize)> {
        if self.sections.is_empty() {
            return Err(Error::Format("manifest lists no sections".into()));
        }
        let mut dims = None;
        for s in &self.sections {
            for p in s.paths() {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(Error::Format(format!(
                        "section {}: missing file {}",
                        s.id,
                        full.display()
                    )));
                }
                let r = RasterContainer::load(&full)?;
                match dims {
                    None => dims = Some((r.height, r.width)),
                    Some(d) if d != (r.height, r.width) => {
                        return Err(Error::Format(format!(
                            "section {}: {} is {}x{}, expected {}x{}",
                            s.id,
                            p.display(),
                            r.width,
                            r.height,
                            d.1,
                            d.0
                        )))
                    }
                    _ => {}
                }
            }
        }
        dims.ok_or_else(|| Error::Format("manifest references no rasters".into()))
    }

    fn single(&self, s: &SectionEntry, p: &Option<PathBuf>, what: &str) -> Result<Grid<f64>> {
        let p = p
            .as_ref()
            .ok_or_else(|| Error::Format(format!("section {} has no {what} raster", s.id)))?;
        RasterContainer::load(self.resolve(p))?.channel(0)
    }

    pub fn load_maps(&self, s: &SectionEntry) -> Result<ParameterMaps> {
        let maps = ParameterMaps::new(
            self.single(s, &s.transmittance, "transmittance")?,
            // f32 storage can round a direction just below pi up to pi
            self.single(s, &s.direction, "direction")?
                .map(|p| canonical_direction(*p)),
            self.single(s, &s.retardation, "retardation")?,
            self.incident,
            self.pixel_size_um,
        )?;
        Ok(match &s.mask {
            Some(p) => maps.with_mask(RasterContainer::load(self.resolve(p))?.to_mask()?),
            None => maps,
        })
    }

    pub fn load_displacement(&self, s: &SectionEntry) -> Result<Option<DisplacementField>> {
        let Some(p) = &s.displacement else {
            return Ok(None);
        };
        let r = RasterContainer::load(self.resolve(p))?;
        Ok(Some(DisplacementField {
            dx: r.channel_by_name("dx")?,
            dy: r.channel_by_name("dy")?,
        }))
    }

    pub fn load_intensity(&self, s: &SectionEntry) -> Result<IntensityStack> {
        let p = s
            .intensity
            .as_ref()
            .ok_or_else(|| Error::Format(format!("section {} has no intensity raster", s.id)))?;
        let r = RasterContainer::load(self.resolve(p))?;
        let angles = r.names.iter().map(|n| parse_angle(n)).collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(r.data.len());
        for a in 0..angles.len() {
            data.extend(r.channel(a)?.into_vec());
        }
        IntensityStack::new(r.height, r.width, angles, data)
    }

    /// Sections in manifest order, optionally restricted to one split.
    pub fn load_stack(&self, split: Option<Split>) -> Result<SectionStack> {
        let mut sections = Vec::new();
        for s in &self.sections {
            if split.is_some_and(|sp| sp != s.split) {
                continue;
            }
            let mut section = Section::new(s.id.clone(), self.load_maps(s)?);
            if let Some(d) = self.load_displacement(s)? {
                section = section.with_displacement(d);
            }
            sections.push(section);
        }
        if sections.is_empty() {
            return Err(Error::Format("no sections selected".into()));
        }
        SectionStack::new(sections, self.spacing_um, self.pixel_size_um)
    }

    /// Write parameter maps next to the manifest and point the entry at them.
    pub fn store_maps(&mut self, index: usize, maps: &ParameterMaps) -> Result<()> {
        let id = self.sections[index].id.clone();
        let dir = self.base.join(&id);
        std::fs::create_dir_all(&dir)?;
        let rel = |name: &str| PathBuf::from(&id).join(format!("{name}.plir"));
        RasterContainer::from_grid("transmittance", &maps.transmittance).save(self.resolve(&rel("transmittance")))?;
        RasterContainer::from_grid("direction", &maps.direction).save(self.resolve(&rel("direction")))?;
        RasterContainer::from_grid("retardation", &maps.retardation).save(self.resolve(&rel("retardation")))?;
        let entry = &mut self.sections[index];
        entry.transmittance = Some(rel("transmittance"));
        entry.direction = Some(rel("direction"));
        entry.retardation = Some(rel("retardation"));
        if let Some(mask) = &maps.mask {
            RasterContainer::from_mask("mask", mask).save(self.base.join(rel("mask")))?;
            entry.mask = Some(rel("mask"));
        }
        Ok(())
    }
}

/// Intensity profile stack as a raster with one channel per polarizer angle.
pub fn intensity_raster(stack: &IntensityStack) -> Result<RasterContainer> {
    let (h, w) = (stack.height(), stack.width());
    let n = stack.angles_deg().len();
    let names = stack.angles_deg().iter().map(|a| angle_channel_name(*a)).collect();
    let mut data = Vec::with_capacity(h * w * n);
    for i in 0..h * w {
        data.extend((0..n).map(|a| stack.plane(a)[i] as f32));
    }
    RasterContainer::new(h, w, names, RasterData::F32(data))
}

pub fn displacement_raster(field: &DisplacementField) -> Result<RasterContainer> {
    RasterContainer::from_grids(&[("dx", &field.dx), ("dy", &field.dy)])
}
