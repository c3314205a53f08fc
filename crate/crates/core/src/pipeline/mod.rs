//! Feature maps and their shared post-processing: smoothing and PCA.

mod featuremap;
mod pca;
mod smooth;

pub use featuremap::{stack_samples, FeatureMap, Provenance, Samples};
pub use pca::{component_map, fit_pca, fit_pca_subsampled, PcaModel};
pub use smooth::smooth;
