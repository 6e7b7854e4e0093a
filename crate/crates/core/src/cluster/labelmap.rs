//! Terrain label maps: classification, multi-pass merging and precision.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::features::{feature_matrix, FeatureExtractor};
use super::kmeans::ClusterModel;
use super::mapping::{validate_mapping, LabelMapping};
use super::ClusterError;
use crate::grid::{GeoGrid, GridGeometry};
use crate::image::{estimate_altitude, FirstReturn, SidescanImage};
use crate::scalar::Scalar;
use crate::sim::NO_CLASS;
use crate::snippet::{extract_snippets, Snippet, SnippetMode, SnippetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePolicy {
    /// Modal class, ties to the higher complexity rank.
    MaxVotes,
    /// Highest complexity rank observed.
    MaxComplexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainLabelMap {
    pub grid: GeoGrid<u16>,
    /// Pass ids that contributed.
    pub provenance: Vec<u32>,
    pub policy: Option<MergePolicy>,
}

/// Grid covering the image footprint with one cell per snippet stride.
pub fn default_geometry<T: Scalar>(image: &SidescanImage<T>, spec: &SnippetSpec) -> Result<GridGeometry, ClusterError> {
    let altitude = estimate_altitude(image, FirstReturn::default())?;
    Ok(GridGeometry::covering(image.footprint_bounds(altitude), spec.stride_m)?)
}

/// Nearest-centroid cluster of each snippet.
pub fn assign_snippets<T: Scalar, E: FeatureExtractor<T> + ?Sized>(
    snippets: &[Snippet<T>],
    model: &ClusterModel<T>,
    extractor: &E,
) -> Result<Vec<(usize, T)>, ClusterError> {
    check_extractor(model, extractor)?;
    let features = feature_matrix(snippets, extractor)?;
    Ok(model.assign_all(features.view()))
}

fn check_extractor<T: Scalar, E: FeatureExtractor<T> + ?Sized>(model: &ClusterModel<T>, extractor: &E) -> Result<(), ClusterError> {
    let info = extractor.info();
    if info.hash != model.extractor.hash || extractor.dim() != model.dim() {
        return Err(ClusterError::ExtractorMismatch { model: model.extractor.hash.clone(), extractor: info.hash });
    }
    Ok(())
}

/// Class with the most votes; ties go to the higher complexity rank.
fn modal_class(votes: &BTreeMap<usize, usize>, mapping: &LabelMapping) -> Option<usize> {
    votes.iter().max_by_key(|(&class, &n)| (n, mapping.rank(class))).map(|(&class, _)| class)
}

/// Grid snippets of `image` through the clusterer and mapping, one class per cell.
///
/// A cell under several snippet centres takes their modal class.
#[allow(clippy::too_many_arguments)]
pub fn classify<T: Scalar, E: FeatureExtractor<T> + ?Sized>(
    image: &SidescanImage<T>,
    model: &ClusterModel<T>,
    extractor: &E,
    mapping: &LabelMapping,
    spec: &SnippetSpec,
    geometry: &GridGeometry,
    pass_id: u32,
) -> Result<TerrainLabelMap, ClusterError> {
    check_extractor(model, extractor)?;
    if mapping.p != model.p {
        return Err(ClusterError::MappingMismatch(format!("mapping has P = {}, model has P = {}", mapping.p, model.p)));
    }
    validate_mapping(mapping)?;
    let snippets = extract_snippets(image, spec, SnippetMode::Grid)?;
    let assigned = assign_snippets(&snippets, model, extractor)?;
    let mut votes: BTreeMap<(usize, usize), BTreeMap<usize, usize>> = BTreeMap::new();
    for (s, (cluster, _)) in snippets.iter().zip(&assigned) {
        if let Some(cell) = geometry.cell_of(s.geo_center[0], s.geo_center[1]) {
            *votes.entry(cell).or_default().entry(mapping.class_of(*cluster)).or_default() += 1;
        }
    }
    let mut grid = GeoGrid::empty(*geometry);
    for ((i, j), v) in votes {
        grid.set(i, j, modal_class(&v, mapping).map(|c| c as u16))?;
    }
    Ok(TerrainLabelMap { grid, provenance: vec![pass_id], policy: None })
}

/// Combines per-pass label maps cell by cell; no-data contributions are skipped.
pub fn merge_maps(maps: &[TerrainLabelMap], mapping: &LabelMapping, policy: MergePolicy) -> Result<TerrainLabelMap, ClusterError> {
    let first = maps.first().ok_or(ClusterError::EmptyInput)?;
    let geometry = first.grid.geometry;
    if maps.iter().any(|m| m.grid.geometry != geometry) {
        return Err(ClusterError::GridMismatch);
    }
    validate_mapping(mapping)?;
    for m in maps {
        if let Some(&bad) = m.grid.values().iter().flatten().find(|&&c| usize::from(c) >= mapping.c) {
            return Err(ClusterError::MappingMismatch(format!("class id {bad} outside mapping with C = {}", mapping.c)));
        }
    }
    let values = (0..geometry.len())
        .map(|k| {
            let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
            for m in maps {
                if let Some(c) = m.grid.values()[k] {
                    *votes.entry(usize::from(c)).or_default() += 1;
                }
            }
            let class = match policy {
                MergePolicy::MaxVotes => modal_class(&votes, mapping),
                MergePolicy::MaxComplexity => votes.keys().copied().max_by_key(|&c| mapping.rank(c)),
            };
            class.map(|c| c as u16)
        })
        .collect();
    let mut provenance: Vec<u32> = maps.iter().flat_map(|m| m.provenance.iter().copied()).collect();
    provenance.sort_unstable();
    provenance.dedup();
    Ok(TerrainLabelMap { grid: GeoGrid::from_values(geometry, values)?, provenance, policy: Some(policy) })
}

/// Majority truth label inside a snippet window, ignoring the nadir mask. Ties go to the lower id.
pub fn snippet_truth(truth: &Array2<u8>, origin: (usize, usize), window: (usize, usize)) -> Option<u8> {
    let mut counts = [0usize; 256];
    let (p, c) = origin;
    for r in p..(p + window.0).min(truth.nrows()) {
        for k in c..(c + window.1).min(truth.ncols()) {
            counts[usize::from(truth[[r, k]])] += 1;
        }
    }
    counts[usize::from(NO_CLASS)] = 0;
    let best = (0..=255u8).max_by_key(|&v| (counts[usize::from(v)], std::cmp::Reverse(v)))?;
    (counts[usize::from(best)] > 0).then_some(best)
}

/// Grid snippets of `image` that carry a truth label, with those labels.
pub fn labelled_snippets<T: Scalar>(
    image: &SidescanImage<T>,
    truth: &Array2<u8>,
    spec: &SnippetSpec,
) -> Result<(Vec<Snippet<T>>, Vec<u8>), ClusterError> {
    if truth.dim() != image.intensities().dim() {
        return Err(ClusterError::TruthMismatch(format!("truth raster {:?} does not match image", truth.dim())));
    }
    let window = spec.window(image);
    let mut out = (Vec::new(), Vec::new());
    for s in extract_snippets(image, spec, SnippetMode::Grid)? {
        if let Some(t) = snippet_truth(truth, s.origin, window) {
            out.0.push(s);
            out.1.push(t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub precision: f64,
    pub snippets: usize,
    /// Truth classes present, ascending; indexes the confusion matrix.
    pub classes: Vec<u8>,
    /// Rows: truth class. Columns: majority class of the snippet's cluster.
    pub confusion: Vec<Vec<usize>>,
    /// Majority truth class of each non-empty cluster.
    pub cluster_majority: BTreeMap<usize, u8>,
}

/// Cluster-majority precision: each cluster is labelled with the majority
/// truth of its members (ties to the lower class id).
pub fn evaluate_precision(assignments: &[usize], truth: &[u8]) -> Result<PrecisionReport, ClusterError> {
    if assignments.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if assignments.len() != truth.len() {
        return Err(ClusterError::TruthMismatch(format!(
            "{} assignments for {} truth labels",
            assignments.len(),
            truth.len()
        )));
    }
    let mut per_cluster: BTreeMap<usize, BTreeMap<u8, usize>> = BTreeMap::new();
    for (&a, &t) in assignments.iter().zip(truth) {
        *per_cluster.entry(a).or_default().entry(t).or_default() += 1;
    }
    let cluster_majority: BTreeMap<usize, u8> = per_cluster
        .iter()
        .map(|(&k, counts)| {
            let (&m, _) = counts.iter().max_by_key(|(&t, &n)| (n, std::cmp::Reverse(t))).expect("non-empty cluster");
            (k, m)
        })
        .collect();
    let mut classes: Vec<u8> = truth.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let index = |c: u8| classes.binary_search(&c).expect("class present");
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    let mut correct = 0usize;
    for (&a, &t) in assignments.iter().zip(truth) {
        let m = cluster_majority[&a];
        confusion[index(t)][index(m)] += 1;
        correct += usize::from(m == t);
    }
    Ok(PrecisionReport {
        precision: correct as f64 / assignments.len() as f64,
        snippets: assignments.len(),
        classes,
        confusion,
        cluster_majority,
    })
}
