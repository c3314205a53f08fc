//! Classical texture descriptors of prepared parameter maps.

mod glcm;
mod histogram;
mod lbp;
mod patch;
mod sobel;
mod tiling;

pub use glcm::{glcm, glcm_features, glcm_offset, glcm_stats, quantize, GLCM_DISTANCES, GLCM_LEVELS};
pub use histogram::{histogram_features, histogram_stats, normalized_histogram, HISTOGRAM_BINS};
pub use lbp::{lbp_code, lbp_features, lbp_histogram, LBP_BINS, LBP_RADII};
pub use patch::{FeatureVector, PreparedSection, TexturePatch, MAP_NAMES};
pub use sobel::circular_sobel;
pub use tiling::{classical_feature_map, TileGrid};

/// Which classical descriptor to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassicalKind {
    Histogram,
    Lbp,
    Glcm,
    Combined,
}

impl ClassicalKind {
    pub fn dims(self) -> usize {
        match self {
            Self::Histogram => 15,
            Self::Lbp => 90,
            Self::Glcm => 36,
            Self::Combined => 141,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Histogram => "histogram",
            Self::Lbp => "lbp",
            Self::Glcm => "glcm",
            Self::Combined => "combined",
        }
    }

    pub fn extract(self, patch: &TexturePatch) -> FeatureVector {
        match self {
            Self::Histogram => histogram_features(patch),
            Self::Lbp => lbp_features(patch),
            Self::Glcm => glcm_features(patch),
            Self::Combined => combined_features(patch),
        }
    }
}

impl std::str::FromStr for ClassicalKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "histogram" => Ok(Self::Histogram),
            "lbp" => Ok(Self::Lbp),
            "glcm" => Ok(Self::Glcm),
            "combined" => Ok(Self::Combined),
            other => Err(crate::Error::InvalidInput(format!("unknown feature set {other:?}"))),
        }
    }
}

/// Histogram, LBP and GLCM features concatenated (141 values).
pub fn combined_features(patch: &TexturePatch) -> FeatureVector {
    FeatureVector::concat(
        "combined",
        &[histogram_features(patch), lbp_features(patch), glcm_features(patch)],
    )
}
