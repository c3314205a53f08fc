use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::patch::PreparedSection;
use super::ClassicalKind;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pipeline::{FeatureMap, Provenance};
use crate::signal::ParameterMaps;

/// Sliding-window layout: full tiles only, partial border tiles dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub tile: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TileGrid {
    pub fn new(height: usize, width: usize, tile: usize, stride: usize) -> Result<Self> {
        if tile == 0 || stride == 0 {
            return Err(Error::invalid("tile and stride must be positive"));
        }
        if height < tile || width < tile {
            return Err(Error::SectionSmallerThanTile { height, width, tile });
        }
        Ok(Self {
            tile,
            stride,
            rows: (height - tile) / stride + 1,
            cols: (width - tile) / stride + 1,
        })
    }

    /// Half-overlapping tiles.
    pub fn half_overlap(height: usize, width: usize, tile: usize) -> Result<Self> {
        Self::new(height, width, tile, (tile / 2).max(1))
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left pixel of tile `(col, row)`.
    pub fn origin(&self, col: usize, row: usize) -> (usize, usize) {
        (col * self.stride, row * self.stride)
    }

    pub fn center(&self, col: usize, row: usize) -> (usize, usize) {
        let (x, y) = self.origin(col, row);
        (x + self.tile / 2, y + self.tile / 2)
    }

    /// Row-major `(col, row)` pairs.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| (c, r)))
    }

    /// Foreground at each tile center; all true without a mask.
    pub fn center_mask(&self, maps: &ParameterMaps) -> Grid<bool> {
        Grid::from_fn(self.rows, self.cols, |c, r| {
            let (x, y) = self.center(c, r);
            maps.mask.as_ref().is_none_or(|m| *m.get(x, y))
        })
    }
}

/// Classical descriptors on a sliding window over one section.
pub fn classical_feature_map(
    maps: &ParameterMaps,
    section: usize,
    kind: ClassicalKind,
    tile: usize,
    stride: usize,
) -> Result<FeatureMap> {
    let (h, w) = maps.dims();
    let grid = TileGrid::new(h, w, tile, stride)?;
    let prepared = PreparedSection::new(maps, section);
    let positions: Vec<(usize, usize)> = grid.positions().collect();
    let vectors: Vec<Vec<f64>> = positions
        .par_iter()
        .map(|&(c, r)| {
            let (x, y) = grid.origin(c, r);
            prepared.patch(x, y, tile).map(|p| kind.extract(&p).values)
        })
        .collect::<Result<_>>()?;
    let data = vectors.into_iter().flatten().map(|v| v as f32).collect();
    FeatureMap::new(
        grid.rows,
        grid.cols,
        kind.dims(),
        data,
        grid.center_mask(maps),
        Provenance {
            section,
            extractor: kind.name().to_string(),
            stride,
        },
    )
}
