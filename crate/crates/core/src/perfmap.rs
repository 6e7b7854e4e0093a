//! Monte-Carlo probability-of-detection maps from repeated insertion and detection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atr::{associate, AtrError, PassDetector};
use crate::grid::{GeoGrid, GridError, GridGeometry};
use crate::image::{slant_to_ground, SidescanImage};
use crate::insert::{insert_random_contacts, insertion_altitude, InsertConfig, InsertError, InsertionRecord, ObjectModel};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerfError {
    #[error("invalid Monte-Carlo config: {0}")]
    InvalidConfig(String),
    #[error("performance map has no trialed cells")]
    NoTrials,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Insert(#[from] InsertError),
    #[error(transparent)]
    Atr(#[from] AtrError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub passes: usize,
    pub contacts_per_pass: usize,
    pub radius: f64,
    pub cell_size: f64,
    pub seed: u64,
    /// Pairwise spacing of inserted objects; twice the object length when unset.
    pub min_separation: Option<f64>,
    pub insert: InsertConfig,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            passes: 10,
            contacts_per_pass: 10,
            radius: 2.0,
            cell_size: 5.0,
            seed: 0,
            min_separation: None,
            insert: InsertConfig::default(),
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<(), PerfError> {
        if self.passes == 0 || self.contacts_per_pass == 0 {
            return Err(PerfError::InvalidConfig("passes and contacts_per_pass must be at least 1".into()));
        }
        if !(self.radius > 0.0) || !(self.cell_size > 0.0) {
            return Err(PerfError::InvalidConfig("radius and cell_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub successes: u32,
    pub trials: u32,
}

impl Tally {
    pub fn pd(&self) -> Option<f64> {
        (self.trials > 0).then(|| f64::from(self.successes) / f64::from(self.trials))
    }

    fn merge(self, other: Tally) -> Tally {
        Tally { successes: self.successes + other.successes, trials: self.trials + other.trials }
    }
}

/// One inserted object and whether it was detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub record: InsertionRecord,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMap {
    pub grid: GeoGrid<Tally>,
    pub passes: usize,
    pub false_alarms: u64,
    pub ensonified_area: f64,
    /// False alarms per hectare per pass.
    pub fad: f64,
    /// Maximum ground range of the source image, for range banding.
    pub max_ground_range: f64,
    pub trials: Vec<Trial>,
}

impl PerformanceMap {
    pub fn pd_grid(&self) -> GeoGrid<f64> {
        let values = self.grid.values().iter().map(|t| t.and_then(|t| t.pd())).collect();
        GeoGrid::from_values(self.grid.geometry, values).expect("same geometry")
    }

    pub fn total(&self) -> Tally {
        self.grid.values().iter().flatten().fold(Tally::default(), |a, &b| a.merge(b))
    }

    /// Detection rate over all trials.
    pub fn mean_pd(&self) -> Option<f64> {
        self.total().pd()
    }

    /// Detection rate of trials whose ground range lies in `[lo, hi)`.
    pub fn pd_in_band(&self, lo: f64, hi: f64) -> Option<f64> {
        rate(self.trials.iter().filter(|t| t.record.ground_range >= lo && t.record.ground_range < hi))
    }

    /// Detection rate per key, e.g. per object class or per terrain class.
    pub fn pd_by<K: Ord>(&self, mut key: impl FnMut(&Trial) -> Option<K>) -> BTreeMap<K, f64> {
        let mut tallies: BTreeMap<K, Tally> = BTreeMap::new();
        for t in &self.trials {
            if let Some(k) = key(t) {
                let e = tallies.entry(k).or_default();
                e.trials += 1;
                e.successes += u32::from(t.detected);
            }
        }
        tallies.into_iter().filter_map(|(k, t)| t.pd().map(|p| (k, p))).collect()
    }

    /// Binary outcome map of one pass: `true` where an insertion was detected.
    pub fn pass_map(&self, pass: u32) -> GeoGrid<bool> {
        let mut grid = GeoGrid::empty(self.grid.geometry);
        for t in self.trials.iter().filter(|t| t.record.pass_id == pass) {
            if let Some((i, j)) = self.grid.geometry.cell_of(t.record.e, t.record.n) {
                let cell = grid.get_mut(i, j).expect("cell inside grid");
                *cell = Some(cell.unwrap_or(false) || t.detected);
            }
        }
        grid
    }
}

fn rate<'a>(trials: impl Iterator<Item = &'a Trial>) -> Option<f64> {
    let (mut n, mut k) = (0u32, 0u32);
    for t in trials {
        n += 1;
        k += u32::from(t.detected);
    }
    (n > 0).then(|| f64::from(k) / f64::from(n))
}

struct PassOutcome {
    trials: Vec<Trial>,
    false_alarms: u64,
}

/// Runs `config.passes` independent insert → detect → associate passes.
pub fn run_monte_carlo<T: Scalar, D: PassDetector<T> + ?Sized>(
    image: &SidescanImage<T>,
    models: &[ObjectModel],
    detector: &D,
    config: &MonteCarloConfig,
) -> Result<PerformanceMap, PerfError> {
    config.validate()?;
    let altitude = insertion_altitude(image)?;
    let geometry = GridGeometry::covering(image.footprint_bounds(altitude), config.cell_size)?;
    let outcomes = (0..config.passes)
        .into_par_iter()
        .map(|pass| {
            let seed = derive_seed(config.seed, pass as u64);
            let (augmented, mut records) = insert_random_contacts(
                image,
                models,
                config.contacts_per_pass,
                config.min_separation,
                seed,
                &config.insert,
            )?;
            for r in &mut records {
                r.pass_id = pass as u32;
            }
            let contacts = detector.detect_pass(&augmented, &records, derive_seed(seed, u64::MAX));
            let assoc = associate(&contacts, &records, config.radius)?;
            let trials = records
                .into_iter()
                .zip(&assoc.matches)
                .map(|(record, m)| Trial { record, detected: m.contact.is_some() })
                .collect();
            Ok(PassOutcome { trials, false_alarms: assoc.false_alarms.len() as u64 })
        })
        .collect::<Result<Vec<_>, PerfError>>()?;

    let mut grid = GeoGrid::empty(geometry);
    let mut trials = Vec::new();
    let mut false_alarms = 0;
    for outcome in outcomes {
        false_alarms += outcome.false_alarms;
        for t in outcome.trials {
            if let Some((i, j)) = geometry.cell_of(t.record.e, t.record.n) {
                let cell = grid.get_mut(i, j).expect("cell inside grid");
                let tally = cell.get_or_insert_with(Tally::default);
                tally.trials += 1;
                tally.successes += u32::from(t.detected);
            }
            trials.push(t);
        }
    }
    let ensonified_area = image.ensonified_area(altitude);
    let hectares = ensonified_area / 10_000.0;
    let fad = if hectares > 0.0 { false_alarms as f64 / (hectares * config.passes as f64) } else { 0.0 };
    Ok(PerformanceMap {
        grid,
        passes: config.passes,
        false_alarms,
        ensonified_area,
        fad,
        max_ground_range: slant_to_ground(image.max_slant_range(), altitude).unwrap_or(0.0),
        trials,
    })
}

/// Fills no-data cells by inverse-distance weighting of the `k` nearest data cells.
pub fn densify(pd: &GeoGrid<f64>, k: usize) -> Result<GeoGrid<f64>, PerfError> {
    let g = pd.geometry;
    let known: Vec<([f64; 2], f64)> = g.cells().filter_map(|(i, j)| pd.get(i, j).map(|&v| (g.center(i, j), v))).collect();
    if known.is_empty() {
        return Err(PerfError::NoTrials);
    }
    let k = k.max(1).min(known.len());
    let values = g
        .cells()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(i, j)| {
            if let Some(&v) = pd.get(i, j) {
                return Some(v);
            }
            let c = g.center(i, j);
            let mut near: Vec<(f64, usize)> =
                known.iter().enumerate().map(|(idx, (p, _))| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2), idx)).collect();
            near.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut wsum, mut vsum) = (0.0, 0.0);
            for &(d2, idx) in &near[..k] {
                let w = 1.0 / d2;
                wsum += w;
                vsum += w * known[idx].1;
            }
            Some(vsum / wsum)
        })
        .collect();
    Ok(GeoGrid::from_values(g, values)?)
}

/// `true` where PD < threshold. No-data cells stay no-data and are never flagged.
pub fn binarize(pd: &GeoGrid<f64>, threshold: f64) -> Result<GeoGrid<bool>, PerfError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PerfError::InvalidThreshold(threshold));
    }
    Ok(pd.map(|&v| v < threshold))
}

/// Summary written next to a PD map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct PerfReport {
    #[serde(rename = "N")]
    pub passes: usize,
    pub trials: u32,
    pub detections: u32,
    pub false_alarms: u64,
    pub fad: f64,
    pub mean_pd: Option<f64>,
    pub near_pd: Option<f64>,
    pub far_pd: Option<f64>,
    pub per_class_pd: BTreeMap<String, f64>,
}

impl PerfReport {
    /// Report with per-class PD keyed by the class returned for each trial.
    pub fn new(map: &PerformanceMap, class_of: impl FnMut(&Trial) -> Option<String>) -> Self {
        let total = map.total();
        let third = map.max_ground_range / 3.0;
        Self {
            passes: map.passes,
            trials: total.trials,
            detections: total.successes,
            false_alarms: map.false_alarms,
            fad: map.fad,
            mean_pd: total.pd(),
            near_pd: map.pd_in_band(0.0, third),
            far_pd: map.pd_in_band(2.0 * third, f64::INFINITY),
            per_class_pd: map.pd_by(class_of),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(w: usize, h: usize) -> GridGeometry {
        GridGeometry::new([0.0, 0.0], 1.0, w, h).unwrap()
    }

    #[test]
    fn tally_mean() {
        let t = [1, 0, 1, 1].iter().fold(Tally::default(), |a, &s| a.merge(Tally { successes: s, trials: 1 }));
        assert_eq!(t.pd(), Some(0.75));
        assert_eq!(Tally::default().pd(), None);
    }

    #[test]
    fn densify_examples() {
        let mut g = GeoGrid::empty(geom(5, 4));
        g.set(2, 1, Some(0.6)).unwrap();
        let d = densify(&g, 4).unwrap();
        assert!(d.values().iter().all(|v| (v.unwrap() - 0.6).abs() < 1e-12));

        let mut g = GeoGrid::empty(geom(3, 1));
        g.set(0, 0, Some(0.0)).unwrap();
        g.set(2, 0, Some(1.0)).unwrap();
        let d = densify(&g, 2).unwrap();
        assert!((d.get(1, 0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(d.get(0, 0), Some(&0.0));

        assert_eq!(densify(&GeoGrid::<f64>::empty(geom(2, 2)), 3), Err(PerfError::NoTrials));
    }

    #[test]
    fn binarize_examples() {
        let g = GeoGrid::from_values(geom(4, 1), vec![Some(0.3), Some(0.5), None, Some(0.0)]).unwrap();
        let b = binarize(&g, 0.5).unwrap();
        assert_eq!(b.values(), &[Some(true), Some(false), None, Some(true)]);
        assert!(binarize(&g, 0.0).unwrap().values().iter().flatten().all(|f| !f));
        assert!(binarize(&g, 1.5).is_err());
    }
}
