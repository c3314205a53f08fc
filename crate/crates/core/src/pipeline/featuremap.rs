use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Where a feature map came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub section: usize,
    pub extractor: String,
    /// Input pixels per feature pixel.
    pub stride: usize,
}

/// Multi-channel raster of features, interleaved `(y, x, channel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub mask: Grid<bool>,
    pub provenance: Provenance,
}

impl FeatureMap {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        mask: Grid<bool>,
        provenance: Provenance,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("feature map needs at least one channel"));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(height * width * channels, data.len()));
        }
        if mask.dims() != (height, width) {
            return Err(Error::shape(
                format!("{width}x{height} mask"),
                format!("{}x{}", mask.width(), mask.height()),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            mask,
            provenance,
        })
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn channel(&self, c: usize) -> Grid<f64> {
        Grid::from_fn(self.height, self.width, |x, y| self.pixel(x, y)[c] as f64)
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.as_slice().iter().filter(|m| **m).count()
    }

    /// Feature vectors of foreground pixels in row-major order.
    pub fn foreground_samples(&self) -> Samples {
        let mut data = Vec::with_capacity(self.foreground_count() * self.channels);
        for (i, m) in self.mask.as_slice().iter().enumerate() {
            if *m {
                let px = &self.data[i * self.channels..(i + 1) * self.channels];
                data.extend(px.iter().map(|v| *v as f64));
            }
        }
        Samples::from_flat(data, self.channels).expect("row length is channels")
    }

    /// Per-pixel map of foreground rows to new vectors; background becomes 0.
    pub fn map_foreground(&self, samples: &Samples, extractor: &str) -> Result<FeatureMap> {
        if samples.rows() != self.foreground_count() {
            return Err(Error::shape(self.foreground_count(), samples.rows()));
        }
        let c = samples.cols();
        let mut data = vec![0f32; self.height * self.width * c];
        let mut row = 0;
        for (i, m) in self.mask.as_slice().iter().enumerate() {
            if *m {
                for (d, s) in data[i * c..(i + 1) * c].iter_mut().zip(samples.row(row)) {
                    *d = *s as f32;
                }
                row += 1;
            }
        }
        FeatureMap::new(
            self.height,
            self.width,
            c,
            data,
            self.mask.clone(),
            Provenance {
                extractor: extractor.to_string(),
                ..self.provenance.clone()
            },
        )
    }
}

/// Row-major sample matrix (`rows` observations of `cols` features).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    cols: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn from_flat(data: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 || data.len() % cols != 0 {
            return Err(Error::shape(format!("multiple of {cols}"), data.len()));
        }
        Ok(Self { cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("sample rows must be non-empty and of equal length"));
        }
        Self::from_flat(rows.concat(), cols)
    }

    pub fn empty(cols: usize) -> Self {
        Self { cols, data: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::shape(self.cols, row.len()));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn append(&mut self, other: &Samples) -> Result<()> {
        if other.cols != self.cols {
            return Err(Error::shape(self.cols, other.cols));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Samples {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Samples { cols: self.cols, data }
    }
}

/// Foreground samples of several maps stacked in order.
pub fn stack_samples(maps: &[FeatureMap]) -> Result<Samples> {
    let cols = maps.first().map_or(1, |m| m.channels);
    let mut out = Samples::empty(cols);
    for m in maps {
        out.append(&m.foreground_samples())?;
    }
    Ok(out)
}
