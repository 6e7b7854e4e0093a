//! Online mini-batch K-means over z-scored features.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::ExtractorInfo;
use super::ClusterError;
use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    /// Number of clusters P.
    pub clusters: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once no centroid moves further than this over an epoch.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { clusters: 20, batch_size: 256, max_epochs: 50, tolerance: 1e-3, seed: 0 }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.clusters == 0 || self.batch_size == 0 || self.max_epochs == 0 || !(self.tolerance >= 0.0) {
            return Err(ClusterError::InvalidConfig(format!("bad k-means config {self:?}")));
        }
        Ok(())
    }
}

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Normalization<T> {
    pub means: Vec<T>,
    /// Population standard deviation, or 1 for constant dimensions.
    pub scales: Vec<T>,
}

impl<T: Scalar> Normalization<T> {
    /// Single streaming pass (Welford) over the rows.
    pub fn fit(data: ArrayView2<'_, T>) -> Self {
        let dim = data.ncols();
        let mut mean = vec![0.0f64; dim];
        let mut m2 = vec![0.0f64; dim];
        for (n, row) in data.rows().into_iter().enumerate() {
            let n = (n + 1) as f64;
            for (d, &v) in row.iter().enumerate() {
                let x = v.as_f64();
                let delta = x - mean[d];
                mean[d] += delta / n;
                m2[d] += delta * (x - mean[d]);
            }
        }
        let rows = data.nrows().max(1) as f64;
        let scales = m2
            .iter()
            .zip(&mean)
            .map(|(&s, &m)| {
                let sd = (s / rows).sqrt();
                // relative floor so rounding noise on a constant column is not amplified
                if sd > 1e-12 * m.abs().max(1.0) {
                    T::lit(sd)
                } else {
                    T::one()
                }
            })
            .collect();
        Self { means: mean.into_iter().map(T::lit).collect(), scales }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, row: ArrayView1<'_, T>) -> Vec<T> {
        row.iter().zip(&self.means).zip(&self.scales).map(|((&v, &m), &s)| (v - m) / s).collect()
    }

    pub fn apply_all(&self, data: ArrayView2<'_, T>) -> Array2<T> {
        let mut out = data.to_owned();
        for mut row in out.rows_mut() {
            for ((v, &m), &s) in row.iter_mut().zip(&self.means).zip(&self.scales) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn invert(&self, row: &[T]) -> Vec<T> {
        row.iter().zip(&self.means).zip(&self.scales).map(|((&v, &m), &s)| v * s + m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: usize,
    /// Largest centroid displacement over the last epoch.
    pub final_shift: f64,
    pub converged: bool,
}

/// Trained clusterer. Centroids live in normalised feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClusterModel<T = f64> {
    #[serde(rename = "P")]
    pub p: usize,
    pub centroids: Vec<Vec<T>>,
    /// Training snippets nearest to each centroid.
    pub counts: Vec<u64>,
    pub extractor: ExtractorInfo,
    pub norm: Normalization<T>,
    pub log: TrainingLog,
}

impl<T: Scalar> ClusterModel<T> {
    /// Checks the structural invariants, e.g. after loading from JSON.
    pub fn validate(&self) -> Result<(), ClusterError> {
        let dim = self.norm.dim();
        let ok = self.p >= 1
            && self.centroids.len() == self.p
            && self.counts.len() == self.p
            && self.norm.scales.len() == dim
            && self.centroids.iter().all(|c| c.len() == dim && c.iter().all(|v| v.is_finite()))
            && self.norm.scales.iter().all(|&s| s > T::zero());
        if !ok {
            return Err(ClusterError::InvalidModel("inconsistent cluster model".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    /// Nearest centroid and squared distance for a normalised feature row.
    pub fn nearest_normalized(&self, row: &[T]) -> (usize, T) {
        nearest(&self.centroids, row)
    }

    /// Nearest centroid and Euclidean distance in normalised space for a raw feature row.
    pub fn assign(&self, raw: ArrayView1<'_, T>) -> (usize, T) {
        let (c, d2) = self.nearest_normalized(&self.norm.apply(raw));
        (c, d2.sqrt())
    }

    pub fn assign_all(&self, raw: ArrayView2<'_, T>) -> Vec<(usize, T)> {
        raw.axis_iter(Axis(0)).into_par_iter().map(|row| self.assign(row)).collect()
    }

    /// Centroids mapped back to raw feature units.
    pub fn raw_centroids(&self) -> Vec<Vec<T>> {
        self.centroids.iter().map(|c| self.norm.invert(c)).collect()
    }
}

/// Lowest-index nearest centroid.
pub fn nearest<T: Scalar>(centroids: &[Vec<T>], row: &[T]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (k, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, row);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Sum of squared distances to the nearest centroid.
pub fn inertia<T: Scalar>(data: ArrayView2<'_, T>, centroids: &[Vec<T>]) -> f64 {
    data.rows().into_iter().map(|r| nearest(centroids, r.as_slice().expect("standard layout")).1.as_f64()).sum()
}

/// k-means++ seeding over `data` rows.
pub fn kmeans_plus_plus<T: Scalar>(data: ArrayView2<'_, T>, k: usize, rng: &mut impl Rng) -> Vec<Vec<T>> {
    let n = data.nrows();
    let row = |i: usize| data.row(i).to_vec();
    let mut centroids = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(&centroids[0], &row(i)).as_f64()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // fewer distinct points than clusters
            rng.random_range(0..n)
        };
        let c = row(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(&c, &row(i)).as_f64());
        }
        centroids.push(c);
    }
    centroids
}

/// Mini-batch K-means from `init`: each batch is assigned against the
/// current centroids, then every member pulls its centroid with step
/// `1/count`. Epochs visit all rows in a seeded shuffled order.
pub fn minibatch_kmeans<T: Scalar>(
    data: ArrayView2<'_, T>,
    init: Vec<Vec<T>>,
    cfg: &KMeansConfig,
) -> (Vec<Vec<T>>, TrainingLog) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let n = data.nrows();
    let mut centroids = init;
    let mut counts = vec![0u64; centroids.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainingLog { epochs: 0, final_shift: f64::INFINITY, converged: false };
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let start = centroids.clone();
        for batch in order.chunks(cfg.batch_size) {
            let labels: Vec<usize> = batch
                .iter()
                .map(|&i| nearest(&centroids, data.row(i).as_slice().expect("standard layout")).0)
                .collect();
            for (&i, &k) in batch.iter().zip(&labels) {
                counts[k] += 1;
                let eta = T::one() / T::lit(counts[k] as f64);
                for (c, &x) in centroids[k].iter_mut().zip(data.row(i)) {
                    *c += eta * (x - *c);
                }
            }
        }
        let shift = start
            .iter()
            .zip(&centroids)
            .map(|(a, b)| squared_distance(a, b).as_f64().sqrt())
            .fold(0.0, f64::max);
        log = TrainingLog { epochs: epoch, final_shift: shift, converged: shift < cfg.tolerance };
        if log.converged {
            break;
        }
    }
    (centroids, log)
}

/// Normalises, seeds with k-means++ from the first shuffled batch and runs
/// mini-batch updates until stable.
pub fn train_clusterer<T: Scalar>(
    features: ArrayView2<'_, T>,
    extractor: ExtractorInfo,
    cfg: &KMeansConfig,
) -> Result<ClusterModel<T>, ClusterError> {
    cfg.validate()?;
    let n = features.nrows();
    if n < cfg.clusters {
        return Err(ClusterError::TooFewSamples { needed: cfg.clusters, got: n });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(ClusterError::DegenerateSnippet("non-finite feature".into()));
    }
    let norm = Normalization::fit(features);
    let data = norm.apply_all(features);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.truncate(cfg.batch_size.max(cfg.clusters).min(n));
    let seed_batch = data.select(Axis(0), &order);
    let init = kmeans_plus_plus(seed_batch.view(), cfg.clusters, &mut rng);
    let (centroids, log) = minibatch_kmeans(data.view(), init, cfg);
    let mut counts = vec![0u64; cfg.clusters];
    for row in data.rows() {
        counts[nearest(&centroids, row.as_slice().expect("standard layout")).0] += 1;
    }
    Ok(ClusterModel { p: cfg.clusters, centroids, counts, extractor, norm, log })
}
