//! Automated target recognition: a pluggable detector interface, a reference
//! highlight/shadow template matcher and detection-to-truth association.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{estimate_altitude, ground_to_slant, slant_to_ground, FirstReturn, Side, SidescanImage};
use crate::insert::{InsertionRecord, ObjectModel, ObjectSpec};
use crate::sim::ray::{cos_incidence, Ray};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtrError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("association radius must be positive, got {0}")]
    InvalidRadius(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub ping: usize,
    /// Image column of the contact centre.
    pub bin: usize,
    pub e: f64,
    pub n: f64,
    pub confidence: f64,
    pub class: String,
}

pub trait Detector<T: Scalar = f64>: Sync {
    fn detect(&self, image: &SidescanImage<T>) -> Vec<Contact>;
}

/// Detector as seen by the Monte-Carlo engine, which also knows the truth
/// and a per-pass seed. Image-only detectors ignore both.
pub trait PassDetector<T: Scalar = f64>: Sync {
    fn detect_pass(&self, image: &SidescanImage<T>, inserted: &[InsertionRecord], seed: u64) -> Vec<Contact>;
}

/// Adapts any image-only [`Detector`] to the pass interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageOnly<D>(pub D);

impl<T: Scalar, D: Detector<T>> PassDetector<T> for ImageOnly<D> {
    fn detect_pass(&self, image: &SidescanImage<T>, _inserted: &[InsertionRecord], _seed: u64) -> Vec<Contact> {
        self.0.detect(image)
    }
}

/// Calibration stub: reports each inserted object independently with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliStub {
    pub p: f64,
}

impl<T: Scalar> PassDetector<T> for BernoulliStub {
    fn detect_pass(&self, _image: &SidescanImage<T>, inserted: &[InsertionRecord], seed: u64) -> Vec<Contact> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        inserted
            .iter()
            .filter(|_| rng.random::<f64>() < self.p)
            .map(|r| Contact { ping: r.ping, bin: 0, e: r.e, n: r.n, confidence: 1.0, class: r.name.clone() })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Objects the template bank is built from.
    pub objects: Vec<ObjectSpec>,
    /// Yaw quantisation over half a turn.
    pub yaw_steps: usize,
    pub threshold: f64,
    pub nms_radius: f64,
    /// Across-track cell size of the ground-range corrected image.
    pub ground_cell: f64,
    /// Along-track box smoothing in pings.
    pub smoothing: usize,
    /// Width in metres of the background guard around the highlight and shadow; 0 disables it.
    pub guard: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            objects: vec![ObjectSpec::cylinder()],
            yaw_steps: 8,
            threshold: 0.5,
            nms_radius: 3.0,
            ground_cell: 0.2,
            smoothing: 3,
            guard: 1.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), AtrError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(AtrError::InvalidConfig(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(self.nms_radius > 0.0) {
            return Err(AtrError::InvalidConfig(format!("NMS radius {} must be positive", self.nms_radius)));
        }
        if !(self.ground_cell > 0.0) || self.yaw_steps == 0 || self.smoothing == 0 || !(self.guard >= 0.0) {
            return Err(AtrError::InvalidConfig("ground_cell, yaw_steps and smoothing must be positive".into()));
        }
        if self.objects.is_empty() {
            return Err(AtrError::InvalidConfig("empty template bank".into()));
        }
        if self.objects.iter().any(|o| !(o.length > 0.0 && o.width > 0.0 && o.height > 0.0)) {
            return Err(AtrError::InvalidConfig("template objects need positive dimensions".into()));
        }
        Ok(())
    }
}

/// Expected signature of one object at one yaw and range band, in
/// ground-image pixels relative to a bare bed (0 = background).
#[derive(Debug, Clone, PartialEq)]
struct Template {
    model: usize,
    rows: usize,
    cols: usize,
    /// Window position of the object centre.
    anchor: (usize, usize),
    taps: Vec<(usize, usize, f64)>,
    sum: f64,
    /// Sum of squared deviations over the whole window.
    ss: f64,
}

/// Normalised cross-correlation against rendered highlight-then-shadow templates.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateDetector {
    config: DetectorConfig,
    models: Vec<ObjectModel>,
}

/// Relative return above which template pixels stop gaining weight.
const HIGHLIGHT_CAP: f64 = 3.0;
/// Range band width (m) sharing one set of templates.
const BAND: f64 = 2.0;

impl TemplateDetector {
    pub fn new(config: DetectorConfig) -> Result<Self, AtrError> {
        config.validate()?;
        let models = config
            .objects
            .iter()
            .map(|o| ObjectModel::from_spec(o, 0.02).map_err(|e| AtrError::InvalidConfig(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(Self { config, models })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    fn render(&self, model: usize, yaw: f64, centre: f64, altitude: f64, ping_res: f64) -> Option<Template> {
        let m = &self.models[model];
        let cell = self.config.ground_cell;
        let (sy, cy) = yaw.sin_cos();
        let half_along = 0.5 * (m.length() * cy.abs() + m.width() * sy.abs());
        let half_across = 0.5 * (m.length() * sy.abs() + m.width() * cy.abs());
        let h = m.max_height().min(0.95 * altitude);
        let shadow = (centre + half_across) * h / (altitude - h);
        let front = ((half_across + self.config.guard) / cell).ceil() as usize;
        let back = ((half_across + shadow) / cell).ceil() as usize + 1;
        let start = centre - (front as f64 + 0.5) * cell;
        if start < cell {
            return None;
        }
        let ha = (half_along / ping_res).ceil() as usize + (self.config.guard / ping_res).round() as usize;
        let (rows, cols) = (2 * ha + 1, front + back + 1);
        let ray = Ray { altitude, step: cell / 4.0, bin_resolution: cell };
        let first = ((start / ray.step).floor() as usize).saturating_sub(1);
        let samples = ((start + cols as f64 * cell) / ray.step).ceil() as usize + 1;
        let mut heights = vec![0.0; samples];
        let mut taps = Vec::new();
        let bed = 0.3;
        for r in 0..rows {
            let t = (r as f64 - ha as f64) * ping_res;
            for (k, z) in heights.iter_mut().enumerate().skip(first) {
                let d = ray.ground(k) - centre;
                *z = m.height_at(t * cy + d * sy, -t * sy + d * cy);
            }
            let vis = ray.visibility(&heights);
            let mut acc = vec![(0.0, 0u32); cols];
            for k in first..samples {
                let x = ray.ground(k);
                let z = heights[k];
                // raised samples return early and lay over toward nadir
                let apparent = (x * x + z * z - 2.0 * altitude * z).max(0.0).sqrt();
                let c = ((apparent - start) / cell).floor();
                if c < 0.0 || c as usize >= cols {
                    continue;
                }
                let v = if !vis[k] {
                    0.0
                } else if z > 0.0 {
                    let slope = (heights[(k + 1).min(samples - 1)] - heights[k - 1]) / (2.0 * ray.step);
                    m.reflectivity * cos_incidence(x, z, slope, altitude) / (bed * cos_incidence(x, 0.0, 0.0, altitude))
                } else {
                    1.0
                };
                let a = &mut acc[c as usize];
                a.0 += v.min(HIGHLIGHT_CAP);
                a.1 += 1;
            }
            for (c, (sum, n)) in acc.into_iter().enumerate() {
                if n > 0 {
                    let w = sum / f64::from(n) - 1.0;
                    if w.abs() > 1e-3 {
                        taps.push((r, c, w));
                    }
                }
            }
        }
        if taps.is_empty() {
            return None;
        }
        let n = (rows * cols) as f64;
        let sum: f64 = taps.iter().map(|t| t.2).sum();
        let ss = taps.iter().map(|t| t.2 * t.2).sum::<f64>() - sum * sum / n;
        Some(Template { model, rows, cols, anchor: (ha, front), taps, sum, ss })
    }

    /// Templates per range band, for every model and yaw.
    fn bank(&self, altitude: f64, ping_res: f64, bands: usize) -> Vec<Vec<Template>> {
        (0..bands)
            .into_par_iter()
            .map(|b| {
                let centre = (b as f64 + 0.5) * BAND;
                let mut out = Vec::new();
                for model in 0..self.models.len() {
                    for s in 0..self.config.yaw_steps {
                        let yaw = std::f64::consts::PI * s as f64 / self.config.yaw_steps as f64;
                        out.extend(self.render(model, yaw, centre, altitude, ping_res));
                    }
                }
                out
            })
            .collect()
    }

    /// Best template score at every (ping, ground cell) of one side.
    pub fn score_map<T: Scalar>(&self, image: &SidescanImage<T>, side: Side, altitude: f64) -> Array2<f64> {
        self.score_side(image, side, altitude).0
    }

    fn score_side<T: Scalar>(&self, image: &SidescanImage<T>, side: Side, altitude: f64) -> (Array2<f64>, Array2<u16>) {
        let ground = ground_image(image, side, altitude, self.config.ground_cell, self.config.smoothing);
        let (pings, cells) = ground.dim();
        let integral = Integral::new(&ground);
        let cell = self.config.ground_cell;
        let bands = ((cells as f64 * cell) / BAND).ceil() as usize;
        let bank = self.bank(altitude, image.ping_resolution(), bands);
        let mut score = Array2::<f64>::zeros((pings, cells));
        let mut which = Array2::<u16>::zeros((pings, cells));
        score
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(which.axis_iter_mut(Axis(0)))
            .enumerate()
            .for_each(|(p, (mut srow, mut wrow))| {
                for c in 0..cells {
                    let band = (((c as f64 + 0.5) * cell) / BAND) as usize;
                    let mut best = 0.0;
                    let mut arg = 0u16;
                    for t in &bank[band.min(bands - 1)] {
                        let (ar, ac) = t.anchor;
                        if p < ar || c < ac || p - ar + t.rows > pings || c - ac + t.cols > cells {
                            continue;
                        }
                        let (r0, c0) = (p - ar, c - ac);
                        let (n, s1, s2) = integral.sums((r0, r0 + t.rows), (c0, c0 + t.cols));
                        let var = s2 - s1 * s1 / n;
                        if var <= 1e-12 * n || t.ss <= 0.0 {
                            continue;
                        }
                        let dot: f64 = t.taps.iter().map(|&(r, k, w)| w * ground[[r0 + r, c0 + k]]).sum();
                        let v = (dot - s1 * t.sum / n) / (var * t.ss).sqrt();
                        if v > best {
                            best = v;
                            arg = t.model as u16;
                        }
                    }
                    srow[c] = best;
                    wrow[c] = arg;
                }
            });
        (score, which)
    }
}


/// Summed-area tables of values and squares.
struct Integral {
    s1: Array2<f64>,
    s2: Array2<f64>,
}

impl Integral {
    fn new(img: &Array2<f64>) -> Self {
        let (h, w) = img.dim();
        let mut s1 = Array2::zeros((h + 1, w + 1));
        let mut s2 = Array2::zeros((h + 1, w + 1));
        for i in 0..h {
            let (mut r1, mut r2) = (0.0, 0.0);
            for j in 0..w {
                let v = img[[i, j]];
                r1 += v;
                r2 += v * v;
                s1[[i + 1, j + 1]] = s1[[i, j + 1]] + r1;
                s2[[i + 1, j + 1]] = s2[[i, j + 1]] + r2;
            }
        }
        Self { s1, s2 }
    }

    /// (count, sum, sum of squares) over rows `[r0, r1)` and columns `[c0, c1)`.
    fn sums(&self, (r0, r1): (usize, usize), (c0, c1): (usize, usize)) -> (f64, f64, f64) {
        let rect = |s: &Array2<f64>| s[[r1, c1]] - s[[r0, c1]] - s[[r1, c0]] + s[[r0, c0]];
        (((r1 - r0) * (c1 - c0)) as f64, rect(&self.s1), rect(&self.s2))
    }
}

/// Resamples one side to uniform ground-range cells and smooths along track.
pub fn ground_image<T: Scalar>(image: &SidescanImage<T>, side: Side, altitude: f64, cell: f64, smoothing: usize) -> Array2<f64> {
    let res = image.bin_resolution();
    let nb = image.swath_bins();
    let max_ground = slant_to_ground(image.max_slant_range(), altitude).unwrap_or(0.0);
    let cells = (max_ground / cell).floor() as usize;
    let pings = image.pings();
    // bins falling in each ground cell, or the nearest bin when none do
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for k in 0..nb {
        if let Ok(g) = slant_to_ground((k as f64 + 0.5) * res, altitude) {
            let c = (g / cell).floor() as usize;
            if c < cells {
                members[c].push(image.column(side, k));
            }
        }
    }
    for (c, m) in members.iter_mut().enumerate() {
        if m.is_empty() {
            let k = ((ground_to_slant((c as f64 + 0.5) * cell, altitude) / res) as usize).min(nb - 1);
            m.push(image.column(side, k));
        }
    }
    let data = image.intensities();
    let mut out = Array2::<f64>::zeros((pings, cells));
    for p in 0..pings {
        for (c, m) in members.iter().enumerate() {
            out[[p, c]] = m.iter().map(|&col| data[[p, col]].as_f64()).sum::<f64>() / m.len() as f64;
        }
    }
    let half = smoothing / 2;
    if half == 0 {
        return out;
    }
    let mut smooth = Array2::<f64>::zeros((pings, cells));
    for p in 0..pings {
        let (lo, hi) = (p.saturating_sub(half), (p + half + 1).min(pings));
        for c in 0..cells {
            let s: f64 = (lo..hi).map(|q| out[[q, c]]).sum();
            smooth[[p, c]] = s / (hi - lo) as f64;
        }
    }
    smooth
}

struct Candidate {
    score: f64,
    ping: usize,
    side: Side,
    cell: usize,
    template: usize,
}

impl<T: Scalar> Detector<T> for TemplateDetector {
    fn detect(&self, image: &SidescanImage<T>) -> Vec<Contact> {
        let Ok(altitude) = estimate_altitude(image, FirstReturn::default()) else {
            return Vec::new();
        };
        let cell = self.config.ground_cell;
        let mut candidates = Vec::new();
        for &side in image.sides() {
            let (score, which) = self.score_side(image, side, altitude);
            let (pings, cells) = score.dim();
            for p in 0..pings {
                for c in 0..cells {
                    let s = score[[p, c]];
                    if s <= self.config.threshold {
                        continue;
                    }
                    let mut peak = true;
                    'nbr: for dp in -1i64..=1 {
                        for dc in -1i64..=1 {
                            let (q, d) = (p as i64 + dp, c as i64 + dc);
                            if (dp, dc) == (0, 0) || q < 0 || d < 0 || q >= pings as i64 || d >= cells as i64 {
                                continue;
                            }
                            if score[[q as usize, d as usize]] > s {
                                peak = false;
                                break 'nbr;
                            }
                        }
                    }
                    if peak {
                        candidates.push(Candidate { score: s, ping: p, side, cell: c, template: which[[p, c]] as usize });
                    }
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.ping.cmp(&b.ping))
                .then((a.side as u8).cmp(&(b.side as u8)))
                .then(a.cell.cmp(&b.cell))
        });
        let mut kept: Vec<Contact> = Vec::new();
        for cand in candidates {
            let ground = (cand.cell as f64 + 0.5) * cell;
            let [e, n] = image.ground_point(cand.ping, cand.side, ground);
            let r = self.config.nms_radius;
            if kept.iter().any(|k| (k.e - e).hypot(k.n - n) < r) {
                continue;
            }
            let k = ((ground_to_slant(ground, altitude) / image.bin_resolution()) as usize).min(image.swath_bins() - 1);
            kept.push(Contact {
                ping: cand.ping,
                bin: image.column(cand.side, k),
                e,
                n,
                confidence: cand.score.clamp(0.0, 1.0),
                class: self.models[cand.template].name.clone(),
            });
        }
        kept
    }
}

impl<T: Scalar> PassDetector<T> for TemplateDetector {
    fn detect_pass(&self, image: &SidescanImage<T>, _inserted: &[InsertionRecord], _seed: u64) -> Vec<Contact> {
        self.detect(image)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub insertion: usize,
    pub contact: Option<usize>,
    pub distance: Option<f64>,
}

/// Outcome of matching contacts to inserted objects, by index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Association {
    /// One entry per insertion, in insertion order.
    pub matches: Vec<Match>,
    pub false_alarms: Vec<usize>,
}

impl Association {
    pub fn detected(&self) -> usize {
        self.matches.iter().filter(|m| m.contact.is_some()).count()
    }
}

/// Greedy one-to-one matching by ascending geo distance.
pub fn associate(contacts: &[Contact], insertions: &[InsertionRecord], radius: f64) -> Result<Association, AtrError> {
    if !(radius > 0.0) {
        return Err(AtrError::InvalidRadius(radius));
    }
    let mut pairs = Vec::new();
    for (i, ins) in insertions.iter().enumerate() {
        for (c, con) in contacts.iter().enumerate() {
            let d = (ins.e - con.e).hypot(ins.n - con.n);
            if d <= radius {
                pairs.push((d, i, c));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut matches: Vec<Match> = (0..insertions.len()).map(|i| Match { insertion: i, contact: None, distance: None }).collect();
    let mut used = vec![false; contacts.len()];
    for (d, i, c) in pairs {
        if matches[i].contact.is_none() && !used[c] {
            matches[i].contact = Some(c);
            matches[i].distance = Some(d);
            used[c] = true;
        }
    }
    let false_alarms = (0..contacts.len()).filter(|&c| !used[c]).collect();
    Ok(Association { matches, false_alarms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::straight_track;

    fn contact(e: f64, n: f64) -> Contact {
        Contact { ping: 0, bin: 0, e, n, confidence: 0.9, class: "cylinder".into() }
    }

    fn record(e: f64, n: f64) -> InsertionRecord {
        InsertionRecord {
            name: "cylinder".into(),
            ping: 0,
            side: Side::Starboard,
            ground_range: e,
            yaw: 0.0,
            pass_id: 0,
            e,
            n,
            shadow_length: 0.0,
        }
    }

    #[test]
    fn association_examples() {
        let a = associate(&[contact(30.5, 0.0)], &[record(30.0, 0.0)], 2.0).unwrap();
        assert_eq!(a.detected(), 1);
        let a = associate(&[contact(0.0, 0.0)], &[record(-1.0, 0.0), record(1.0, 0.0)], 2.0).unwrap();
        assert_eq!(a.detected(), 1);
        assert_eq!(a.matches.iter().filter(|m| m.contact.is_none()).count(), 1);
        let cs = [contact(0.0, 0.0), contact(0.5, 0.0), contact(1.0, 0.0)];
        let a = associate(&cs, &[record(0.2, 0.0)], 2.0).unwrap();
        assert_eq!((a.detected(), a.false_alarms.len()), (1, 2));
        assert_eq!(a.matches[0].contact, Some(0));
        assert!(associate(&cs, &[], 0.0).is_err());
    }

    #[test]
    fn integral_matches_direct_sum() {
        let img = Array2::from_shape_fn((7, 9), |(i, j)| (i * 9 + j) as f64 * 0.01);
        let it = Integral::new(&img);
        let (n, s, q) = it.sums((2, 5), (3, 8));
        let block = img.slice(ndarray::s![2..5, 3..8]);
        assert_eq!(n, 15.0);
        assert!((s - block.sum()).abs() < 1e-12);
        assert!((q - block.mapv(|v| v * v).sum()).abs() < 1e-12);
    }

    #[test]
    fn constant_image_has_no_contacts() {
        let img = SidescanImage::new(
            "c",
            Array2::from_elem((200, 1200), 0.4),
            0.05,
            0.1,
            Some(10.0),
            straight_track([0.0, 0.0], 0.0, 200, 0.1),
            Side::Starboard,
        )
        .unwrap();
        let det = TemplateDetector::new(DetectorConfig { threshold: 0.0, ..Default::default() }).unwrap();
        assert!(det.detect(&img).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(TemplateDetector::new(DetectorConfig { threshold: 1.5, ..Default::default() }).is_err());
        assert!(TemplateDetector::new(DetectorConfig { nms_radius: 0.0, ..Default::default() }).is_err());
        assert!(TemplateDetector::new(DetectorConfig { objects: vec![], ..Default::default() }).is_err());
    }
}
