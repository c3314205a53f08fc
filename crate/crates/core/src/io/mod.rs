//! File formats: raster container, tensor archive, stack manifest, feature
//! and label directories, CSV tables and PNG rendering.

mod archive;
mod features;
mod manifest;
mod raster;
mod render;
mod tables;

pub use archive::{
    load_pca, load_train_state, pca_archive, pca_from_archive, save_pca, save_train_state, train_state_archive,
    train_state_from_archive, NamedTensor, TensorArchive, ARCHIVE_MAGIC, ARCHIVE_VERSION, KIND_PCA, KIND_TRAIN_STATE,
};
pub use features::{
    load_features, load_labels, save_features, save_labels, FeatureIndex, FeatureSectionEntry, FeatureSet, LabelIndex,
    LabelSet, FEATURE_INDEX, LABEL_INDEX,
};
pub use manifest::{
    angle_channel_name, displacement_raster, intensity_raster, SectionEntry, Split, StackManifest, MANIFEST_VERSION,
};
pub use raster::{DType, RasterContainer, RasterData, RASTER_MAGIC, RASTER_VERSION};
pub use render::{
    decode_png, encode_png_gray, encode_png_rgb, heat_entry, heat_table, label_color, render_gray, render_heat,
    render_labels, Rgb,
};
pub use tables::{load_labels_csv, load_points, read_labels, read_points, write_labels, write_points, LabeledPoint};
