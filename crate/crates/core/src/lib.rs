//! Seafloor complexity characterisation for side-scan sonar.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atr;
pub mod cluster;
pub mod grid;
pub mod image;
pub mod insert;
pub mod perfmap;
pub mod raster;
pub mod repair;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod snippet;

pub use scalar::Scalar;

pub type Image = image::SidescanImage<f64>;
pub type Snippet = snippet::Snippet<f64>;
pub type ClusterModel = cluster::ClusterModel<f64>;
pub type Normalization = cluster::Normalization<f64>;
pub type FeatureVector = cluster::FeatureVector<f64>;
pub type PdGrid = grid::GeoGrid<f64>;
pub type LabelGrid = grid::GeoGrid<u16>;
