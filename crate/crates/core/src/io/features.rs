//! Directories of per-section feature maps and label maps.
//!
//! A feature directory holds `features.toml` and, per section, an `f32`
//! raster of feature channels plus a `u8` foreground mask. A label directory
//! holds `labels.toml` and one `u8` raster per section with channels
//! `label` and `foreground`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::raster::{RasterContainer, RasterData};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pipeline::{FeatureMap, Provenance};

pub const FEATURE_INDEX: &str = "features.toml";
pub const LABEL_INDEX: &str = "labels.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSectionEntry {
    pub id: String,
    pub features: PathBuf,
    pub mask: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureIndex {
    pub version: u32,
    pub extractor: String,
    /// Input pixels per feature pixel.
    pub stride: usize,
    pub tile: usize,
    pub channels: usize,
    /// Reference pixel size of the input maps.
    pub pixel_size_um: f64,
    pub sections: Vec<FeatureSectionEntry>,
}

/// Feature maps of a stack with their section ids.
#[derive(Clone, Debug)]
pub struct FeatureSet {
    pub index: FeatureIndex,
    pub maps: Vec<FeatureMap>,
}

impl FeatureSet {
    pub fn ids(&self) -> Vec<String> {
        self.index.sections.iter().map(|s| s.id.clone()).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.sections.iter().position(|s| s.id == id)
    }
}

fn channel_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

pub fn save_features(
    dir: impl AsRef<Path>,
    ids: &[String],
    maps: &[FeatureMap],
    tile: usize,
    pixel_size_um: f64,
) -> Result<FeatureIndex> {
    let dir = dir.as_ref();
    if ids.len() != maps.len() || maps.is_empty() {
        return Err(Error::invalid("need one id per feature map"));
    }
    std::fs::create_dir_all(dir)?;
    let first = &maps[0];
    let mut sections = Vec::new();
    for (id, m) in ids.iter().zip(maps) {
        if m.channels != first.channels || m.provenance.stride != first.provenance.stride {
            return Err(Error::invalid("feature maps differ in channels or stride"));
        }
        let features = PathBuf::from(format!("{id}.plir"));
        let mask = PathBuf::from(format!("{id}.mask.plir"));
        RasterContainer::new(
            m.height,
            m.width,
            channel_names(m.channels),
            RasterData::F32(m.data.clone()),
        )?
        .save(dir.join(&features))?;
        RasterContainer::from_mask("foreground", &m.mask).save(dir.join(&mask))?;
        sections.push(FeatureSectionEntry {
            id: id.clone(),
            features,
            mask,
        });
    }
    let index = FeatureIndex {
        version: 1,
        extractor: first.provenance.extractor.clone(),
        stride: first.provenance.stride,
        tile,
        channels: first.channels,
        pixel_size_um,
        sections,
    };
    std::fs::write(
        dir.join(FEATURE_INDEX),
        toml::to_string(&index).expect("index is representable"),
    )?;
    Ok(index)
}

pub fn load_features(dir: impl AsRef<Path>) -> Result<FeatureSet> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join(FEATURE_INDEX))?;
    let index: FeatureIndex = toml::from_str(&text).map_err(|e| Error::Format(format!("feature index: {e}")))?;
    if index.version != 1 {
        return Err(Error::Format(format!(
            "unsupported feature index version {}",
            index.version
        )));
    }
    let mut maps = Vec::new();
    for (i, s) in index.sections.iter().enumerate() {
        let r = RasterContainer::load(dir.join(&s.features))?;
        let RasterData::F32(data) = r.data else {
            return Err(Error::Format(format!("{}: features must be f32", s.features.display())));
        };
        if r.names.len() != index.channels {
            return Err(Error::shape(index.channels, r.names.len()));
        }
        let mask = RasterContainer::load(dir.join(&s.mask))?.to_mask()?;
        let provenance = Provenance {
            section: i,
            extractor: index.extractor.clone(),
            stride: index.stride,
        };
        maps.push(FeatureMap::new(
            r.height,
            r.width,
            index.channels,
            data,
            mask,
            provenance,
        )?);
    }
    Ok(FeatureSet { index, maps })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelIndex {
    pub version: u32,
    pub clusters: usize,
    pub sections: Vec<FeatureSectionEntry>,
}

/// Per-section cluster labels with their foreground masks.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSet {
    pub ids: Vec<String>,
    pub clusters: usize,
    pub labels: Vec<Grid<usize>>,
    pub masks: Vec<Grid<bool>>,
}

pub fn save_labels(dir: impl AsRef<Path>, set: &LabelSet) -> Result<()> {
    let dir = dir.as_ref();
    if set.clusters > 256 {
        return Err(Error::invalid("label rasters hold at most 256 clusters"));
    }
    std::fs::create_dir_all(dir)?;
    let mut sections = Vec::new();
    for ((id, l), m) in set.ids.iter().zip(&set.labels).zip(&set.masks) {
        let file = PathBuf::from(format!("{id}.labels.plir"));
        let mut data = Vec::with_capacity(2 * l.len());
        for (v, f) in l.as_slice().iter().zip(m.as_slice()) {
            data.push(if *f { *v as u8 } else { 0 });
            data.push(u8::from(*f));
        }
        RasterContainer::new(
            l.height(),
            l.width(),
            vec!["label".into(), "foreground".into()],
            RasterData::U8(data),
        )?
        .save(dir.join(&file))?;
        sections.push(FeatureSectionEntry {
            id: id.clone(),
            features: file.clone(),
            mask: file,
        });
    }
    let index = LabelIndex {
        version: 1,
        clusters: set.clusters,
        sections,
    };
    std::fs::write(
        dir.join(LABEL_INDEX),
        toml::to_string(&index).expect("index is representable"),
    )?;
    Ok(())
}

pub fn load_labels(dir: impl AsRef<Path>) -> Result<LabelSet> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join(LABEL_INDEX))?;
    let index: LabelIndex = toml::from_str(&text).map_err(|e| Error::Format(format!("label index: {e}")))?;
    let mut set = LabelSet {
        ids: Vec::new(),
        clusters: index.clusters,
        labels: Vec::new(),
        masks: Vec::new(),
    };
    for s in &index.sections {
        let r = RasterContainer::load(dir.join(&s.features))?;
        set.labels.push(r.channel_by_name("label")?.map(|v| *v as usize));
        set.masks.push(r.channel_by_name("foreground")?.map(|v| *v != 0.0));
        set.ids.push(s.id.clone());
    }
    Ok(set)
}
