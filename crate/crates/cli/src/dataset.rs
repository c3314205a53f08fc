//! A served data directory.
//!
//! Layout, relative to the directory:
//!
//! ```text
//! stack.toml            stack manifest with parameter maps
//! features/             feature directory (features.toml)
//! pca.plic              optional PCA model; fitted on load when absent
//! clusters/m<m>/        optional label directories, one per cut
//! model.plic            optional encoder checkpoint, reported as provenance
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use pli_core::io::{load_features, load_labels, load_pca, FeatureSet, LabelSet, StackManifest, TensorArchive};
use pli_core::pipeline::{fit_pca, stack_samples, PcaModel};
use pli_core::signal::{estimate_inclination, render_fom, OpticsConfig};
use pli_core::ParameterMaps;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::ops::MANIFEST_FILE;

pub const DEFAULT_COMPONENTS: usize = 20;
/// Smoothing of the reduced feature maps before retrieval, in feature pixels.
pub const QUERY_SMOOTH_SIGMA: f64 = 1.0;

pub struct Dataset {
    pub name: String,
    pub manifest: StackManifest,
    pub maps: Vec<ParameterMaps>,
    pub optics: OpticsConfig,
    pub features: FeatureSet,
    pub pca: PcaModel,
    pub pca_fitted_on_load: bool,
    pub clusterings: BTreeMap<usize, LabelSet>,
    pub checkpoint: Option<Value>,
}

impl Dataset {
    pub fn open(dir: &Path) -> CliResult<Self> {
        let manifest = StackManifest::load(dir.join(MANIFEST_FILE))?;
        let mut maps = Vec::new();
        for s in &manifest.sections {
            maps.push(manifest.load_maps(s)?);
        }
        let features = load_features(dir.join("features"))?;
        let ids: Vec<String> = manifest.sections.iter().map(|s| s.id.clone()).collect();
        if features.ids() != ids {
            return Err(CliError::invalid("feature sections do not match the manifest"));
        }
        let pca_path = dir.join("pca.plic");
        let (pca, pca_fitted_on_load) = if pca_path.exists() {
            (load_pca(&pca_path)?, false)
        } else {
            let samples = stack_samples(&features.maps)?;
            (fit_pca(&samples, DEFAULT_COMPONENTS.min(samples.cols()))?, true)
        };
        if pca.channels() != features.index.channels {
            return Err(CliError::invalid("PCA model and features differ in channels"));
        }
        let mut clusterings = BTreeMap::new();
        let cluster_dir = dir.join("clusters");
        if cluster_dir.is_dir() {
            for entry in std::fs::read_dir(&cluster_dir)? {
                let entry = entry?;
                let name = entry.file_name().to_string_lossy().into_owned();
                let Some(m) = name.strip_prefix('m').and_then(|v| v.parse::<usize>().ok()) else {
                    continue;
                };
                let set = load_labels(entry.path())?;
                if set.ids != ids {
                    return Err(CliError::invalid(format!(
                        "cluster cut {m} does not match the manifest"
                    )));
                }
                clusterings.insert(m, set);
            }
        }
        let ckpt = dir.join("model.plic");
        let checkpoint = if ckpt.exists() {
            let a = TensorArchive::load(&ckpt)?;
            Some(json!({ "kind": a.kind, "meta": a.meta }))
        } else {
            None
        };
        let name = dir
            .canonicalize()?
            .file_name()
            .map_or_else(|| "data".to_string(), |n| n.to_string_lossy().into_owned());
        Ok(Self {
            name,
            manifest,
            maps,
            optics: OpticsConfig::default(),
            features,
            pca,
            pca_fitted_on_load,
            clusterings,
            checkpoint,
        })
    }

    pub fn section_index(&self, id: &str) -> Option<usize> {
        self.manifest.sections.iter().position(|s| s.id == id)
    }

    pub fn layers(&self) -> Vec<String> {
        let mut layers = vec!["transmittance".to_string(), "fom".to_string()];
        layers.extend(self.clusterings.keys().map(|m| format!("cluster:{m}")));
        layers
    }

    pub fn fom(&self, section: usize) -> CliResult<pli_core::Grid<[u8; 3]>> {
        let maps = &self.maps[section];
        Ok(render_fom(maps, &estimate_inclination(maps, &self.optics)?)?)
    }

    pub fn feature_meta(&self) -> Value {
        let ix = &self.features.index;
        json!({
            "extractor": ix.extractor,
            "channels": ix.channels,
            "tile": ix.tile,
            "stride": ix.stride,
            "pixel_size_um": ix.pixel_size_um,
            "pca": {
                "components": self.pca.k(),
                "explained_variance_ratio": self.pca.explained_variance_ratio,
                "fitted_on_load": self.pca_fitted_on_load,
            },
            "query_smooth_sigma": QUERY_SMOOTH_SIGMA,
            "checkpoint": self.checkpoint,
        })
    }
}
