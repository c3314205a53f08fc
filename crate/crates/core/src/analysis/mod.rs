//! Clustering, consistency, probing and retrieval on feature volumes.

mod iou;
mod kmeans;
mod probe;
mod retrieval;
mod silhouette;
mod twostep;
mod ward;

pub use iou::cross_section_iou;
pub use kmeans::{assign, kmeans, ClusterModel, KMEANS_MAX_ITER, KMEANS_TOL};
pub use probe::{
    evaluate_classifier, evaluate_regressor, fit_probe_classifier, fit_probe_regressor, macro_f1, r2_score,
    stratified_split, ClassifierProbeConfig, LogisticProbe, ProbeScore, RegressorProbeConfig, RidgeProbe, Split,
    ZScore, PROBE_GRAD_TOL, PROBE_MAX_ITER,
};
pub use retrieval::{query_mean, rbf_retrieve, QueryPoint};
pub use silhouette::{silhouette, SILHOUETTE_SUBSAMPLE};
pub use twostep::{label_maps, TwoStepClustering};
pub use ward::{cut, ward_agglomerate, Dendrogram, Merge};
