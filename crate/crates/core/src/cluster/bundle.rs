//! Representative snippets per cluster and the labelling bundle on disk.

use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::kmeans::ClusterModel;
use super::ClusterError;
use crate::raster::{self, RasterError};
use crate::scalar::Scalar;
use crate::snippet::Snippet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    /// Index into the pool.
    pub index: usize,
    /// Euclidean distance to the centroid in normalised feature space.
    pub distance: f64,
}

/// Per cluster, the `k` pool members assigned to it that lie closest to its
/// centroid, nearest first. Ties keep pool order.
pub fn representatives<T: Scalar>(model: &ClusterModel<T>, pool: ArrayView2<'_, T>, k: usize) -> Vec<Vec<Representative>> {
    let mut out: Vec<Vec<Representative>> = vec![Vec::new(); model.p];
    for (index, (cluster, d)) in model.assign_all(pool).into_iter().enumerate() {
        out[cluster].push(Representative { index, distance: d.as_f64() });
    }
    for list in &mut out {
        list.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
        list.truncate(k);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSnippet {
    /// Path relative to the bundle directory.
    pub file: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleCluster {
    pub id: usize,
    pub count: u64,
    pub snippets: Vec<BundleSnippet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    #[serde(rename = "P")]
    pub p: usize,
    pub clusters: Vec<BundleCluster>,
}

pub const BUNDLE_MANIFEST: &str = "manifest.json";

/// Writes the representatives of every cluster as 8-bit PNGs plus `manifest.json`.
pub fn export_bundle<T: Scalar>(
    dir: &Path,
    model: &ClusterModel<T>,
    pool: &[Snippet<T>],
    reps: &[Vec<Representative>],
) -> Result<BundleManifest, ClusterError> {
    if reps.len() != model.p {
        return Err(ClusterError::MappingMismatch(format!("{} representative lists for P = {}", reps.len(), model.p)));
    }
    fs::create_dir_all(dir).map_err(|source| RasterError::Io { path: dir.into(), source })?;
    let mut clusters = Vec::with_capacity(model.p);
    for (id, list) in reps.iter().enumerate() {
        let mut snippets = Vec::with_capacity(list.len());
        for (rank, r) in list.iter().enumerate() {
            let snippet = pool
                .get(r.index)
                .ok_or_else(|| ClusterError::MappingMismatch(format!("representative {} outside pool", r.index)))?;
            let file = format!("c{id:03}_{rank:03}.png");
            raster::write_png(&dir.join(&file), &snippet.pixels)?;
            snippets.push(BundleSnippet { file, distance: r.distance });
        }
        clusters.push(BundleCluster { id, count: model.counts[id], snippets });
    }
    let manifest = BundleManifest { p: model.p, clusters };
    raster::write_json(&dir.join(BUNDLE_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_bundle(dir: &Path) -> Result<BundleManifest, ClusterError> {
    Ok(raster::read_json(&dir.join(BUNDLE_MANIFEST))?)
}
