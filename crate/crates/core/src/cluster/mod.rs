//! Operator-led terrain classification: texture features, online K-means,
//! surjective remapping to semantic classes and label maps.

pub mod bundle;
pub mod features;
pub mod kmeans;
pub mod labelmap;
pub mod mapping;

use thiserror::Error;

pub use bundle::{export_bundle, read_bundle, representatives, BundleManifest, Representative};
pub use features::{extract_features, feature_matrix, ExtractorInfo, FeatureExtractor, FeatureVector, TextureBank, TextureConfig};
pub use kmeans::{inertia, kmeans_plus_plus, minibatch_kmeans, train_clusterer, ClusterModel, KMeansConfig, Normalization};
pub use labelmap::{
    assign_snippets, classify, default_geometry, evaluate_precision, labelled_snippets, merge_maps, snippet_truth, MergePolicy, PrecisionReport,
    TerrainLabelMap,
};
pub use mapping::{validate_mapping, ClassInfo, LabelMapping};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate snippet: {0}")]
    DegenerateSnippet(String),
    #[error("feature vector has length {got}, extractor declares {expected}")]
    FeatureLength { expected: usize, got: usize },
    #[error("model was trained with extractor {model}, got {extractor}")]
    ExtractorMismatch { model: String, extractor: String },
    #[error("mapping mismatch: {0}")]
    MappingMismatch(String),
    #[error("class {class} is not hit by any cluster")]
    NotSurjective { class: usize },
    #[error("map[{index}] = {value} is outside [0, {classes})")]
    EntryOutOfRange { index: usize, value: usize, classes: usize },
    #[error("C = {c} exceeds P = {p}")]
    TooManyClasses { p: usize, c: usize },
    #[error("complexity rank {0} used twice")]
    DuplicateRank(i64),
    #[error("malformed mapping: {0}")]
    MalformedMapping(String),
    #[error("truth mismatch: {0}")]
    TruthMismatch(String),
    #[error("label maps do not share a grid")]
    GridMismatch,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid cluster model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Sonar(#[from] crate::image::SonarError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
}
