use serde::{Deserialize, Serialize};

use super::sobel::circular_sobel;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::ParameterMaps;

/// Section maps prepared for texture description: `I_T / I_0`, `r` and the
/// circular Sobel response of `phi`, each clipped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSection {
    pub maps: [Grid<f64>; 3],
    pub section: usize,
}

impl PreparedSection {
    pub fn new(maps: &ParameterMaps, section: usize) -> Self {
        let i0 = maps.incident;
        let t = maps.transmittance.map(|v| (v / i0).clamp(0.0, 1.0));
        let r = maps.retardation.map(|v| v.clamp(0.0, 1.0));
        let p = circular_sobel(&maps.direction);
        Self {
            maps: [t, r, p],
            section,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].dims()
    }

    pub fn patch(&self, x: usize, y: usize, side: usize) -> Result<TexturePatch> {
        let (h, w) = self.dims();
        if x + side > w || y + side > h {
            return Err(Error::OutOfBounds {
                x: x as i64,
                y: y as i64,
                side,
                width: w,
                height: h,
            });
        }
        let crop = |g: &Grid<f64>| g.crop(x, y, side, side);
        Ok(TexturePatch {
            maps: [crop(&self.maps[0])?, crop(&self.maps[1])?, crop(&self.maps[2])?],
            section: self.section,
            x,
            y,
        })
    }
}

/// A square window of prepared maps with its origin in the section.
#[derive(Clone, Debug, PartialEq)]
pub struct TexturePatch {
    pub maps: [Grid<f64>; 3],
    pub section: usize,
    pub x: usize,
    pub y: usize,
}

impl TexturePatch {
    pub fn from_maps(maps: [Grid<f64>; 3]) -> Result<Self> {
        let (h, w) = maps[0].dims();
        if h != w || h == 0 {
            return Err(Error::invalid(format!("texture patch must be square, got {w}x{h}")));
        }
        if maps.iter().any(|m| m.dims() != (h, w)) {
            return Err(Error::shape(format!("{w}x{h}"), "mismatched maps"));
        }
        Ok(Self {
            maps: maps.map(|m| m.map(|v| v.clamp(0.0, 1.0))),
            section: 0,
            x: 0,
            y: 0,
        })
    }

    pub fn side(&self) -> usize {
        self.maps[0].width()
    }

    pub fn rot90(&self) -> Self {
        Self {
            maps: [self.maps[0].rot90(), self.maps[1].rot90(), self.maps[2].rot90()],
            ..self.clone()
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        Self {
            maps: [
                self.maps[0].flip_horizontal(),
                self.maps[1].flip_horizontal(),
                self.maps[2].flip_horizontal(),
            ],
            ..self.clone()
        }
    }
}

pub const MAP_NAMES: [&str; 3] = ["transmittance", "retardation", "direction_edges"];

/// Feature values with the extractor name and one label per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub schema: String,
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn concat(schema: &str, parts: &[FeatureVector]) -> Self {
        Self {
            schema: schema.to_string(),
            labels: parts.iter().flat_map(|p| p.labels.iter().cloned()).collect(),
            values: parts.iter().flat_map(|p| p.values.iter().copied()).collect(),
        }
    }
}
