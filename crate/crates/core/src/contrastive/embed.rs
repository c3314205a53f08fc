use super::encoder::encode;
use super::train::{crops_to_tensor, TrainState};
use crate::error::Result;
use crate::features::TileGrid;
use crate::pipeline::{FeatureMap, Provenance};
use crate::signal::ParameterMaps;

const TILES_PER_PASS: usize = 64;

/// Hidden representations on a sliding window; one feature pixel per tile.
/// The projection head is not used.
pub fn embed(
    maps: &ParameterMaps,
    section: usize,
    state: &TrainState,
    tile: usize,
    stride: usize,
) -> Result<FeatureMap> {
    let (h, w) = maps.dims();
    let grid = TileGrid::new(h, w, tile, stride)?;
    let positions: Vec<(usize, usize)> = grid.positions().collect();
    let hidden = state.encoder.hidden;
    let mut data = Vec::with_capacity(positions.len() * hidden);
    for chunk in positions.chunks(TILES_PER_PASS) {
        let crops = chunk
            .iter()
            .map(|&(c, r)| {
                let (x, y) = grid.origin(c, r);
                maps.crop(x, y, tile, tile)
            })
            .collect::<Result<Vec<_>>>()?;
        let x = state.standardizer.apply(&crops_to_tensor(&crops)?)?;
        let out = encode(&state.encoder, &state.params, &x)?;
        data.extend(out.data.iter().map(|v| *v as f32));
    }
    FeatureMap::new(
        grid.rows,
        grid.cols,
        hidden,
        data,
        grid.center_mask(maps),
        Provenance {
            section,
            extractor: "encoder".into(),
            stride,
        },
    )
}
