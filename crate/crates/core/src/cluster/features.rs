//! Snippet texture features behind a pluggable extractor interface.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ClusterError;
use crate::scalar::Scalar;
use crate::snippet::Snippet;

/// Identity of a feature extractor and its configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorInfo {
    pub id: String,
    pub config: serde_json::Value,
    /// SHA-256 over the id and canonical config JSON.
    pub hash: String,
}

impl ExtractorInfo {
    pub fn new(id: &str, config: serde_json::Value) -> Self {
        let canonical = serde_json::json!({ "id": id, "config": config }).to_string();
        Self { id: id.to_string(), hash: hex::encode(Sha256::digest(canonical.as_bytes())), config }
    }
}

/// Maps a snippet's pixels to a fixed-length feature vector.
pub trait FeatureExtractor<T: Scalar = f64>: Sync {
    fn info(&self) -> ExtractorInfo;

    /// Length of every vector produced.
    fn dim(&self) -> usize;

    /// Pixels are finite; callers check that before calling.
    fn extract(&self, pixels: ArrayView2<'_, T>) -> Vec<T>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
    pub extractor_hash: String,
}

/// Features of one snippet.
pub fn extract_features<T: Scalar, E: FeatureExtractor<T> + ?Sized>(
    pixels: ArrayView2<'_, T>,
    extractor: &E,
) -> Result<FeatureVector<T>, ClusterError> {
    if pixels.is_empty() {
        return Err(ClusterError::DegenerateSnippet("empty snippet".into()));
    }
    if let Some(v) = pixels.iter().find(|v| !v.is_finite()) {
        return Err(ClusterError::DegenerateSnippet(format!("non-finite pixel {v}")));
    }
    let values = extractor.extract(pixels);
    if values.len() != extractor.dim() {
        return Err(ClusterError::FeatureLength { expected: extractor.dim(), got: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ClusterError::DegenerateSnippet("extractor produced a non-finite feature".into()));
    }
    Ok(FeatureVector { values, extractor_hash: extractor.info().hash })
}

/// Feature matrix (one row per snippet), computed in parallel.
pub fn feature_matrix<T: Scalar, E: FeatureExtractor<T> + ?Sized>(
    snippets: &[Snippet<T>],
    extractor: &E,
) -> Result<Array2<T>, ClusterError> {
    let rows = snippets
        .par_iter()
        .map(|s| extract_features(s.pixels.view(), extractor).map(|f| f.values))
        .collect::<Result<Vec<_>, _>>()?;
    let dim = extractor.dim();
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((flat.len() / dim.max(1), dim), flat).expect("rows have extractor length"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureConfig {
    /// Gray levels of the co-occurrence matrix.
    pub levels: usize,
    /// Intensity width of one gray level. Quantisation is relative to the
    /// snippet mean, so the co-occurrence features ignore a DC offset.
    pub level_width: f64,
    /// Co-occurrence pixel offsets, each used along bins and along pings.
    pub offsets: [usize; 2],
    /// Block sizes of the multi-scale variance.
    pub scales: [usize; 2],
    /// Adjacent bins averaged before any statistic. Two makes the default
    /// 5 cm bins match the 10 cm ping spacing.
    pub bin_pooling: usize,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self { levels: 16, level_width: 0.05, offsets: [1, 2], scales: [2, 4], bin_pooling: 2 }
    }
}

/// Default hand-crafted texture bank (25 values).
///
/// Layout: mean, variance, skew; then for each offset and orientation
/// (along bins, along pings) the normalised contrast, homogeneity and
/// entropy of the co-occurrence matrix; then an 8-bin magnitude-weighted
/// gradient orientation histogram; then the variance of block means at
/// both scales.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TextureBank {
    pub config: TextureConfig,
}

pub const ORIENTATION_BINS: usize = 8;

impl TextureBank {
    pub const ID: &'static str = "texture-bank-v1";

    pub fn new(config: TextureConfig) -> Result<Self, ClusterError> {
        if config.levels < 2 || !(config.level_width > 0.0) || config.offsets.contains(&0) || config.scales.contains(&0) || config.bin_pooling == 0 {
            return Err(ClusterError::InvalidConfig(format!("bad texture config {config:?}")));
        }
        Ok(Self { config })
    }
}

impl<T: Scalar> FeatureExtractor<T> for TextureBank {
    fn info(&self) -> ExtractorInfo {
        ExtractorInfo::new(Self::ID, serde_json::to_value(&self.config).expect("config serialises"))
    }

    fn dim(&self) -> usize {
        3 + 3 * 2 * self.config.offsets.len() + ORIENTATION_BINS + self.config.scales.len()
    }

    fn extract(&self, pixels: ArrayView2<'_, T>) -> Vec<T> {
        let px = pool_bins(pixels, self.config.bin_pooling);
        let mut out = Vec::with_capacity(25);
        let (mean, var, skew) = moments(px.iter().copied());
        out.extend([mean, var, skew]);
        let levels = quantise(&px, mean, &self.config);
        for &d in &self.config.offsets {
            for (dr, dc) in [(0, d), (d, 0)] {
                let g = glcm(&levels, self.config.levels, dr, dc);
                out.extend(glcm_stats(&g, self.config.levels));
            }
        }
        out.extend(orientation_histogram(&px));
        for &b in &self.config.scales {
            out.push(block_variance(&px, b));
        }
        out.into_iter().map(T::lit).collect()
    }
}

/// Averages runs of `k` adjacent bins; a trailing partial run is averaged on its own.
fn pool_bins<T: Scalar>(pixels: ArrayView2<'_, T>, k: usize) -> Array2<f64> {
    let (rows, cols) = pixels.dim();
    let out_cols = cols.div_ceil(k);
    Array2::from_shape_fn((rows, out_cols), |(r, c)| {
        let hi = ((c + 1) * k).min(cols);
        (c * k..hi).map(|j| pixels[[r, j]].as_f64()).sum::<f64>() / (hi - c * k) as f64
    })
}

/// Mean, population variance and skewness; skew is zero without variance.
fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    // shifted by the first value so a constant input gives exact zeros
    let shift = values.clone().next().unwrap_or(0.0);
    let mean = shift + values.clone().map(|v| v - shift).sum::<f64>() / n;
    let (m2, m3) = values.fold((0.0, 0.0), |(a, b), v| {
        let d = v - mean;
        (a + d * d, b + d * d * d)
    });
    let var = m2 / n;
    let skew = if var > 1e-24 { m3 / n / var.powf(1.5) } else { 0.0 };
    (mean, var, skew)
}

fn quantise(px: &Array2<f64>, mean: f64, cfg: &TextureConfig) -> Array2<usize> {
    let half = (cfg.levels / 2) as f64;
    let top = (cfg.levels - 1) as f64;
    px.mapv(|v| ((v - mean) / cfg.level_width + half).floor().clamp(0.0, top) as usize)
}

/// Symmetric, normalised co-occurrence matrix for the pixel offset `(dr, dc)`.
fn glcm(levels: &Array2<usize>, n: usize, dr: usize, dc: usize) -> Vec<f64> {
    let (rows, cols) = levels.dim();
    let mut g = vec![0.0; n * n];
    let mut total = 0.0;
    for r in 0..rows.saturating_sub(dr) {
        for c in 0..cols.saturating_sub(dc) {
            let (a, b) = (levels[[r, c]], levels[[r + dr, c + dc]]);
            g[a * n + b] += 1.0;
            g[b * n + a] += 1.0;
            total += 2.0;
        }
    }
    if total > 0.0 {
        g.iter_mut().for_each(|v| *v /= total);
    }
    g
}

/// Contrast normalised to [0, 1], homogeneity, entropy (nats).
fn glcm_stats(g: &[f64], n: usize) -> [f64; 3] {
    let (mut contrast, mut homogeneity, mut entropy) = (0.0, 0.0, 0.0);
    if g.iter().all(|&p| p == 0.0) {
        return [0.0; 3];
    }
    for i in 0..n {
        for j in 0..n {
            let p = g[i * n + j];
            if p == 0.0 {
                continue;
            }
            let d = i.abs_diff(j) as f64;
            contrast += p * d * d;
            homogeneity += p / (1.0 + d);
            entropy -= p * p.ln();
        }
    }
    let span = (n - 1) as f64;
    [contrast / (span * span), homogeneity, entropy.max(0.0)]
}

/// Unsigned gradient orientations in [0, π), weighted by magnitude, summing to one.
fn orientation_histogram(px: &Array2<f64>) -> [f64; ORIENTATION_BINS] {
    let (rows, cols) = px.dim();
    let mut hist = [0.0; ORIENTATION_BINS];
    for r in 1..rows.saturating_sub(1) {
        for c in 1..cols.saturating_sub(1) {
            let gx = 0.5 * (px[[r, c + 1]] - px[[r, c - 1]]);
            let gy = 0.5 * (px[[r + 1, c]] - px[[r - 1, c]]);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(PI);
            let bin = ((angle / PI * ORIENTATION_BINS as f64) as usize).min(ORIENTATION_BINS - 1);
            hist[bin] += mag;
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    }
    hist
}

/// Variance of the means of non-overlapping `b × b` blocks.
fn block_variance(px: &Array2<f64>, b: usize) -> f64 {
    let (rows, cols) = px.dim();
    let means: Vec<f64> = (0..rows / b)
        .flat_map(|i| (0..cols / b).map(move |j| (i, j)))
        .map(|(i, j)| {
            let block = px.slice(ndarray::s![i * b..(i + 1) * b, j * b..(j + 1) * b]);
            block.sum() / (b * b) as f64
        })
        .collect();
    moments(means.iter().copied()).1
}
