//! Synthetic contact insertion into existing side-scan imagery.
//!
//! The seabed under the object is assumed flat at the sensor altitude. Each
//! affected ping is ray cast twice, once over the bare bed and once with the
//! object composited in, and the ratio of the two echoes drives the new
//! pixel values. Output pixels are rescaled to the mean and speckle contrast
//! of a background ring around the insertion.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{estimate_altitude, slant_to_ground, FirstReturn, Side, SidescanImage, SonarError};
use crate::scalar::Scalar;
use crate::sim::ray::{Echo, Ray};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InsertError {
    #[error("object footprint leaves the image: {0}")]
    FootprintOutsideImage(String),
    #[error("object footprint reaches the nadir zone at ground range {0} m")]
    InsideNadir(f64),
    #[error("could only place {placed} of {requested} contacts")]
    PlacementInfeasible { placed: usize, requested: usize },
    #[error("invalid object model: {0}")]
    InvalidModel(String),
    #[error("invalid insertion request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Sonar(#[from] SonarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    /// Lying cylinder with its axis along the object length.
    Cylinder,
    TruncatedCone,
    /// Triangular prism with its ridge along the object length.
    Wedge,
    /// Half ellipsoid.
    Sphere,
}

impl Primitive {
    pub const ALL: [Primitive; 4] = [Primitive::Cylinder, Primitive::TruncatedCone, Primitive::Wedge, Primitive::Sphere];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Cylinder => "cylinder",
            Primitive::TruncatedCone => "truncated_cone",
            Primitive::Wedge => "wedge",
            Primitive::Sphere => "sphere",
        }
    }

    /// Height at normalised coordinates `u, v ∈ [-1, 1]` as a fraction of the peak height.
    fn profile(self, u: f64, v: f64) -> f64 {
        if u.abs() > 1.0 || v.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Primitive::Cylinder => (1.0 - v * v).max(0.0).sqrt(),
            Primitive::Wedge => 1.0 - v.abs(),
            Primitive::TruncatedCone => {
                let r = (u * u + v * v).sqrt();
                ((1.0 - r) / 0.5).clamp(0.0, 1.0)
            }
            Primitive::Sphere => (1.0 - u * u - v * v).max(0.0).sqrt(),
        }
    }
}

/// Parametric description of an object, in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub primitive: Primitive,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    #[serde(default = "default_reflectivity")]
    pub reflectivity: f64,
}

fn default_reflectivity() -> f64 {
    0.9
}

impl ObjectSpec {
    pub fn new(primitive: Primitive, length: f64, width: f64, height: f64) -> Self {
        Self { primitive, length, width, height, reflectivity: default_reflectivity() }
    }

    /// The default 2 m × 0.5 m cylinder.
    pub fn cylinder() -> Self {
        Self::new(Primitive::Cylinder, 2.0, 0.5, 0.5)
    }
}

/// Heightfield of an object over its footprint.
///
/// Row `i` runs along the object length, column `j` across its width, both
/// centred on the object origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub name: String,
    pub heights: Array2<f64>,
    pub resolution: f64,
    pub reflectivity: f64,
}

impl ObjectModel {
    pub fn from_spec(spec: &ObjectSpec, resolution: f64) -> Result<Self, InsertError> {
        let ok = spec.length > 0.0
            && spec.width > 0.0
            && spec.height >= 0.0
            && resolution > 0.0
            && (0.0..=1.0).contains(&spec.reflectivity);
        if !ok {
            return Err(InsertError::InvalidModel(format!("{spec:?} at resolution {resolution}")));
        }
        let nu = ((spec.length / resolution).ceil() as usize).max(1);
        let nv = ((spec.width / resolution).ceil() as usize).max(1);
        let heights = Array2::from_shape_fn((nu, nv), |(i, j)| {
            let u = ((i as f64 + 0.5) / nu as f64) * 2.0 - 1.0;
            let v = ((j as f64 + 0.5) / nv as f64) * 2.0 - 1.0;
            spec.height * spec.primitive.profile(u, v)
        });
        Self::new(spec.primitive.name(), heights, spec.length / nu as f64, spec.reflectivity)
    }

    pub fn new(name: impl Into<String>, heights: Array2<f64>, resolution: f64, reflectivity: f64) -> Result<Self, InsertError> {
        if heights.is_empty() || !(resolution > 0.0) {
            return Err(InsertError::InvalidModel("empty footprint".into()));
        }
        if heights.iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
            return Err(InsertError::InvalidModel("heights must be finite and non-negative".into()));
        }
        Ok(Self { name: name.into(), heights, resolution, reflectivity })
    }

    pub fn length(&self) -> f64 {
        self.heights.nrows() as f64 * self.resolution
    }

    pub fn width(&self) -> f64 {
        self.heights.ncols() as f64 * self.resolution
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(0.0, f64::max)
    }

    /// Half-diagonal of the footprint.
    pub fn radius(&self) -> f64 {
        0.5 * self.length().hypot(self.width())
    }

    /// Bilinear height at object coordinates (metres from the centre), zero outside.
    pub fn height_at(&self, u: f64, v: f64) -> f64 {
        let (nu, nv) = self.heights.dim();
        let fu = u / self.resolution + nu as f64 / 2.0 - 0.5;
        let fv = v / self.resolution + nv as f64 / 2.0 - 0.5;
        if fu <= -1.0 || fv <= -1.0 || fu >= nu as f64 || fv >= nv as f64 {
            return 0.0;
        }
        let (i0, j0) = (fu.floor(), fv.floor());
        let (tu, tv) = (fu - i0, fv - j0);
        let at = |i: f64, j: f64| {
            if i < 0.0 || j < 0.0 || i >= nu as f64 || j >= nv as f64 {
                0.0
            } else {
                self.heights[[i as usize, j as usize]]
            }
        };
        let a = at(i0, j0) * (1.0 - tv) + at(i0, j0 + 1.0) * tv;
        let b = at(i0 + 1.0, j0) * (1.0 - tv) + at(i0 + 1.0, j0 + 1.0) * tv;
        a * (1.0 - tu) + b * tu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InsertConfig {
    /// Reflectivity of the bare bed the object is compared against.
    pub bed_reflectivity: f64,
    /// Absolute intensity written for fully shadowed pixels before re-speckling.
    pub shadow_floor: f64,
    /// Along-track beam width (rad) used to blur the inserted footprint.
    pub beam_width: f64,
    /// Width in metres of the background ring used for grain matching.
    pub ring_width: f64,
    pub respeckle: bool,
    /// Closest ground range allowed for random placements, on top of the object radius.
    pub min_ground_range: f64,
    /// Consecutive rejected draws before random placement gives up.
    pub max_retries: usize,
}

impl Default for InsertConfig {
    fn default() -> Self {
        Self {
            bed_reflectivity: 0.3,
            shadow_floor: 0.04,
            beam_width: 0.03,
            ring_width: 2.0,
            respeckle: true,
            min_ground_range: 0.0,
            max_retries: 1000,
        }
    }
}

/// Where to put an object: ping index, side and ground range of its centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub ping: usize,
    pub side: Side,
    pub ground_range: f64,
    /// Object length axis relative to the along-track direction (rad, clockwise).
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertionRecord {
    pub name: String,
    pub ping: usize,
    pub side: Side,
    pub ground_range: f64,
    pub yaw: f64,
    pub pass_id: u32,
    pub e: f64,
    pub n: f64,
    /// Ground length of the cast shadow on the centre ping.
    pub shadow_length: f64,
}

/// Per-pixel insertion result before blur and grain matching.
struct Patch {
    /// (ping, slant bin, relative lit return, shadow fraction)
    cells: Vec<(usize, usize, f64, f64)>,
    shadow_length: f64,
}

fn ray_for<T: Scalar>(image: &SidescanImage<T>, altitude: f64) -> Ray {
    Ray { altitude, step: 0.5 * image.bin_resolution(), bin_resolution: image.bin_resolution() }
}

fn trace<T: Scalar>(
    image: &SidescanImage<T>,
    model: &ObjectModel,
    at: &Placement,
    altitude: f64,
    cfg: &InsertConfig,
) -> Patch {
    let ray = ray_for(image, altitude);
    let nb = image.swath_bins();
    let r = model.radius();
    let hmax = model.max_height();
    let centre = image.ground_point(at.ping, at.side, at.ground_range);
    let heading = image.nav()[at.ping].heading + at.yaw;
    let axis_u = [heading.sin(), heading.cos()];
    let axis_v = [heading.cos(), -heading.sin()];
    let max_ground = slant_to_ground(image.max_slant_range(), altitude).unwrap_or(0.0);
    let samples = (max_ground / ray.step).ceil() as usize + 2;
    let k0 = (((at.ground_range - r) / ray.step).floor().max(0.0) as usize).min(samples);
    let k1 = if hmax < altitude {
        let far = (at.ground_range + r) * altitude / (altitude - hmax);
        ((far / ray.step).ceil() as usize + 4).min(samples)
    } else {
        samples
    };

    let mut cells = Vec::new();
    let mut shadow_length = 0.0;
    let mut best_offset = f64::INFINITY;
    let mut heights = vec![0.0; samples];
    let mut reflect = vec![cfg.bed_reflectivity; samples];
    let flat_heights = vec![0.0; samples];
    let flat_reflect = vec![cfg.bed_reflectivity; samples];
    for (p, pose) in image.nav().iter().enumerate() {
        let fwd = pose.forward();
        let along = (centre[0] - pose.e) * fwd[0] + (centre[1] - pose.n) * fwd[1];
        if along.abs() > r {
            continue;
        }
        let dir = pose.across(at.side);
        let mut touched = false;
        for k in k0..k1 {
            let x = ray.ground(k);
            let d = [pose.e + x * dir[0] - centre[0], pose.n + x * dir[1] - centre[1]];
            let u = d[0] * axis_u[0] + d[1] * axis_u[1];
            let v = d[0] * axis_v[0] + d[1] * axis_v[1];
            let h = model.height_at(u, v);
            heights[k] = h;
            if h > 0.0 {
                reflect[k] = model.reflectivity;
                touched = true;
            } else {
                reflect[k] = cfg.bed_reflectivity;
            }
        }
        if touched {
            let mut obj = vec![Echo::default(); nb];
            let mut flat = vec![Echo::default(); nb];
            let (mut first, mut last) = (None, None);
            ray.cast(&heights, &reflect, k0..k1, |_| 1.0, &mut obj, |k, _, lit| {
                if !lit {
                    first.get_or_insert(k);
                    last = Some(k);
                }
            });
            ray.cast(&flat_heights, &flat_reflect, k0..k1, |_| 1.0, &mut flat, |_, _, _| {});
            if along.abs() < best_offset {
                best_offset = along.abs();
                shadow_length = match (first, last) {
                    (Some(a), Some(b)) => (b - a + 1) as f64 * ray.step,
                    _ => 0.0,
                };
            }
            let mut prev = 1.0;
            for b in 0..nb {
                if obj[b] == flat[b] {
                    continue;
                }
                let (rel, fs) = if obj[b].is_empty() {
                    (prev, 0.0)
                } else {
                    let base = flat[b].lit_sum / f64::from(flat[b].samples().max(1));
                    let rel = if base > 0.0 { obj[b].lit_sum / f64::from(obj[b].samples()) / base } else { 1.0 };
                    (rel, obj[b].shadow_fraction())
                };
                prev = rel;
                cells.push((p, b, rel, fs));
            }
        }
        heights[k0..k1].fill(0.0);
    }
    Patch { cells, shadow_length }
}

/// Mean and coefficient of variation of a background ring around a bin box.
fn ring_stats<T: Scalar>(
    image: &SidescanImage<T>,
    side: Side,
    pings: (usize, usize),
    bins: (usize, usize),
    nadir_bin: usize,
    width: f64,
) -> (f64, f64) {
    let wp = (width / image.ping_resolution()).ceil() as usize;
    let wb = (width / image.bin_resolution()).ceil() as usize;
    let (p0, p1) = (pings.0.saturating_sub(wp), (pings.1 + wp).min(image.pings() - 1));
    let (b0, b1) = (bins.0.saturating_sub(wb).max(nadir_bin), (bins.1 + wb).min(image.swath_bins() - 1));
    let data = image.intensities();
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for p in p0..=p1 {
        for b in b0..=b1 {
            if (pings.0..=pings.1).contains(&p) && (bins.0..=bins.1).contains(&b) {
                continue;
            }
            let v = data[[p, image.column(side, b)]].as_f64();
            n += 1;
            sum += v;
            sq += v * v;
        }
    }
    if n == 0 || sum <= 0.0 {
        let all: Vec<f64> = data.iter().map(|v| v.as_f64()).collect();
        n = all.len();
        sum = all.iter().sum();
        sq = all.iter().map(|v| v * v).sum();
    }
    let mean = sum / n as f64;
    if mean <= 0.0 {
        return (0.0, 0.0);
    }
    let var = (sq / n as f64 - mean * mean).max(0.0);
    (mean, var.sqrt() / mean)
}

fn check_placement<T: Scalar>(image: &SidescanImage<T>, model: &ObjectModel, at: &Placement, altitude: f64) -> Result<(), InsertError> {
    if at.ping >= image.pings() {
        return Err(InsertError::FootprintOutsideImage(format!("ping {} of {}", at.ping, image.pings())));
    }
    if !image.sides().contains(&at.side) {
        return Err(InsertError::FootprintOutsideImage(format!("{:?} side not imaged", at.side)));
    }
    let r = model.radius();
    if at.ground_range - r <= 0.0 {
        return Err(InsertError::InsideNadir(at.ground_range));
    }
    let max_ground = slant_to_ground(image.max_slant_range(), altitude)?;
    if at.ground_range + r > max_ground {
        return Err(InsertError::FootprintOutsideImage(format!(
            "ground range {} + {r} beyond {max_ground}",
            at.ground_range
        )));
    }
    let reach = (r / image.ping_resolution()).ceil() as usize;
    if at.ping < reach || at.ping + reach >= image.pings() {
        return Err(InsertError::FootprintOutsideImage(format!("ping {} within {reach} pings of the image edge", at.ping)));
    }
    Ok(())
}

/// Altitude used for insertion: metadata if present, else the first-return estimate.
pub fn insertion_altitude<T: Scalar>(image: &SidescanImage<T>) -> Result<f64, InsertError> {
    Ok(estimate_altitude(image, FirstReturn::default())?)
}

/// Inserts one object. The input image is left untouched.
pub fn insert_contact<T: Scalar>(
    image: &SidescanImage<T>,
    model: &ObjectModel,
    at: Placement,
    seed: u64,
    cfg: &InsertConfig,
) -> Result<(SidescanImage<T>, InsertionRecord), InsertError> {
    let altitude = insertion_altitude(image)?;
    let mut out = image.clone();
    let record = insert_in_place(&mut out, image, model, &at, altitude, seed, cfg)?;
    Ok((out, record))
}

fn insert_in_place<T: Scalar>(
    out: &mut SidescanImage<T>,
    source: &SidescanImage<T>,
    model: &ObjectModel,
    at: &Placement,
    altitude: f64,
    seed: u64,
    cfg: &InsertConfig,
) -> Result<InsertionRecord, InsertError> {
    check_placement(source, model, at, altitude)?;
    let [e, n] = source.ground_point(at.ping, at.side, at.ground_range);
    let patch = trace(source, model, at, altitude, cfg);
    let record = InsertionRecord {
        name: model.name.clone(),
        ping: at.ping,
        side: at.side,
        ground_range: at.ground_range,
        yaw: at.yaw,
        pass_id: 0,
        e,
        n,
        shadow_length: patch.shadow_length,
    };
    if patch.cells.is_empty() {
        return Ok(record);
    }

    // blur the relative profile along track, one column at a time
    let half = |b: usize| {
        let w = (cfg.beam_width * b as f64 * source.bin_resolution() / source.ping_resolution()).round() as usize;
        w / 2
    };
    let p_lo = patch.cells.iter().map(|c| c.0).min().unwrap_or(0);
    let p_hi = patch.cells.iter().map(|c| c.0).max().unwrap_or(0);
    let b_lo = patch.cells.iter().map(|c| c.1).min().unwrap_or(0);
    let b_hi = patch.cells.iter().map(|c| c.1).max().unwrap_or(0);
    let spread = half(b_hi);
    let (q_lo, q_hi) = (p_lo.saturating_sub(spread), (p_hi + spread).min(source.pings() - 1));
    let nadir_bin = (altitude / source.bin_resolution()).ceil() as usize;
    let (mean, cv) = ring_stats(source, at.side, (q_lo, q_hi), (b_lo, b_hi), nadir_bin, cfg.ring_width);
    let rows = q_hi - q_lo + 1;
    let cols = b_hi - b_lo + 1;
    let mut value = Array2::<f64>::from_elem((rows, cols), 1.0);
    let mut touched = Array2::<bool>::from_elem((rows, cols), false);
    for &(p, b, rel, fs) in &patch.cells {
        let floor = if mean > 0.0 { cfg.shadow_floor / mean } else { 0.0 };
        value[[p - q_lo, b - b_lo]] = rel + fs * floor;
        touched[[p - q_lo, b - b_lo]] = true;
    }

    let gamma = if cfg.respeckle && cv > 1e-9 {
        let shape = 1.0 / (cv * cv);
        Some(Gamma::new(shape, 1.0 / shape).map_err(|e| InsertError::InvalidRequest(e.to_string()))?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = out.intensities_mut();
    for c in 0..cols {
        let h = half(b_lo + c);
        let col = source.column(at.side, b_lo + c);
        for r in 0..rows {
            let (lo, hi) = (r.saturating_sub(h), (r + h + 1).min(rows));
            if !(lo..hi).any(|q| touched[[q, c]]) {
                continue;
            }
            // pings beyond the patch rows count as untouched bed
            let p = q_lo + r;
            let (plo, phi) = (p.saturating_sub(h), (p + h + 1).min(source.pings()));
            let mut sum = 0.0;
            for q in plo..phi {
                sum += if q >= q_lo && q <= q_hi { value[[q - q_lo, c]] } else { 1.0 };
            }
            let blurred = sum / (phi - plo) as f64;
            let s = gamma.as_ref().map_or(1.0, |g| g.sample(&mut rng));
            data[[p, col]] = T::lit((mean * blurred * s).clamp(0.0, 1.0));
        }
    }
    Ok(record)
}

/// Inserts `count` objects at uniformly drawn, mutually separated locations.
///
/// Models are used round-robin. `min_separation` defaults to twice the
/// longest model length.
pub fn insert_random_contacts<T: Scalar>(
    image: &SidescanImage<T>,
    models: &[ObjectModel],
    count: usize,
    min_separation: Option<f64>,
    seed: u64,
    cfg: &InsertConfig,
) -> Result<(SidescanImage<T>, Vec<InsertionRecord>), InsertError> {
    if count == 0 || models.is_empty() {
        return Err(InsertError::InvalidRequest("need at least one contact and one model".into()));
    }
    let altitude = insertion_altitude(image)?;
    let placements = random_placements(image, models, count, min_separation, altitude, seed, cfg)?;
    let mut out = image.clone();
    let mut records = Vec::with_capacity(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    for (i, at) in placements.iter().enumerate() {
        let model = &models[i % models.len()];
        let snapshot = out.clone();
        records.push(insert_in_place(&mut out, &snapshot, model, at, altitude, rng.random(), cfg)?);
    }
    Ok((out, records))
}

fn random_placements<T: Scalar>(
    image: &SidescanImage<T>,
    models: &[ObjectModel],
    count: usize,
    min_separation: Option<f64>,
    altitude: f64,
    seed: u64,
    cfg: &InsertConfig,
) -> Result<Vec<Placement>, InsertError> {
    let r = models.iter().map(ObjectModel::radius).fold(0.0, f64::max);
    let sep = min_separation.unwrap_or_else(|| 2.0 * models.iter().map(ObjectModel::length).fold(0.0, f64::max));
    let max_ground = slant_to_ground(image.max_slant_range(), altitude)?;
    let (g_lo, g_hi) = (cfg.min_ground_range.max(0.0) + r * 1.001, max_ground - r);
    let reach = (r / image.ping_resolution()).ceil() as usize;
    if g_lo >= g_hi || 2 * reach + 1 >= image.pings() {
        return Err(InsertError::PlacementInfeasible { placed: 0, requested: count });
    }
    let sides = image.sides();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<(Placement, [f64; 2])> = Vec::with_capacity(count);
    while placed.len() < count {
        let mut found = None;
        for _ in 0..cfg.max_retries.max(1) {
            let at = Placement {
                ping: rng.random_range(reach..image.pings() - reach),
                side: sides[rng.random_range(0..sides.len())],
                ground_range: rng.random_range(g_lo..g_hi),
                yaw: rng.random_range(0.0..std::f64::consts::PI),
            };
            let g = image.ground_point(at.ping, at.side, at.ground_range);
            if placed.iter().all(|(_, q)| (g[0] - q[0]).hypot(g[1] - q[1]) >= sep) {
                found = Some((at, g));
                break;
            }
        }
        match found {
            Some(p) => placed.push(p),
            None => return Err(InsertError::PlacementInfeasible { placed: placed.len(), requested: count }),
        }
    }
    Ok(placed.into_iter().map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::straight_track;

    fn flat_image(value: f64, pings: usize, bins: usize) -> SidescanImage<f64> {
        SidescanImage::new(
            "flat",
            Array2::from_elem((pings, bins), value),
            0.05,
            0.1,
            Some(10.0),
            straight_track([0.0, 0.0], 0.0, pings, 0.1),
            Side::Starboard,
        )
        .unwrap()
    }

    fn quiet() -> InsertConfig {
        InsertConfig { respeckle: false, ..Default::default() }
    }

    fn cylinder(h: f64) -> ObjectModel {
        ObjectModel::from_spec(&ObjectSpec::new(Primitive::Cylinder, 2.0, 0.5, h), 0.02).unwrap()
    }

    #[test]
    fn primitive_heights() {
        for p in Primitive::ALL {
            let m = ObjectModel::from_spec(&ObjectSpec::new(p, 2.0, 1.0, 0.5), 0.02).unwrap();
            assert!(m.max_height() <= 0.5 + 1e-12 && m.max_height() > 0.45, "{p:?}");
            assert_eq!(m.height_at(5.0, 0.0), 0.0);
            assert!((m.length() - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shadow_length_matches_similar_triangles() {
        let img = flat_image(0.4, 100, 1400);
        for (range, h) in [(30.0, 0.5), (60.0, 0.5), (20.0, 1.0)] {
            let at = Placement { ping: 50, side: Side::Starboard, ground_range: range, yaw: 0.0 };
            let (_, rec) = insert_contact(&img, &cylinder(h), at, 1, &quiet()).unwrap();
            let expected = range * h / (10.0 - h);
            assert!((rec.shadow_length - expected).abs() < 0.05, "R {range} h {h}: {} vs {expected}", rec.shadow_length);
        }
    }

    #[test]
    fn zero_height_is_identity() {
        let img = flat_image(0.3, 80, 1200);
        let flat = ObjectModel::new("pad", Array2::zeros((50, 20)), 0.04, 0.9).unwrap();
        let at = Placement { ping: 40, side: Side::Starboard, ground_range: 25.0, yaw: 0.3 };
        let (out, _) = insert_contact(&img, &flat, at, 9, &InsertConfig::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn highlight_then_shadow_and_rest_untouched() {
        let img = flat_image(0.4, 100, 1400);
        let at = Placement { ping: 50, side: Side::Starboard, ground_range: 30.0, yaw: 0.0 };
        let (out, _) = insert_contact(&img, &cylinder(0.5), at, 1, &quiet()).unwrap();
        let row = out.intensities().row(50);
        let bright = row.iter().position(|&v| v > 0.45).unwrap();
        let dark = row.iter().position(|&v| v < 0.2).unwrap();
        assert!(bright < dark);
        for p in [0, 20, 80, 99] {
            assert_eq!(out.intensities().row(p), img.intensities().row(p));
        }
        let slant = (30f64.powi(2) + 100.0).sqrt();
        assert_eq!(row[(slant / 0.05) as usize - 40], 0.4);
    }

    #[test]
    fn grain_matches_background() {
        use rand_distr::Exp1;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((200, 1000), |_| {
            let e: f64 = Exp1.sample(&mut rng);
            (0.3 * (1.0 + 0.6 * (e - 1.0))).clamp(0.0, 1.0)
        });
        let img = flat_image(0.3, 200, 1000).with_intensities(data).unwrap();
        // a bed-coloured bump only millimetres high leaves the relative profile near 1
        let mut spec = ObjectSpec::new(Primitive::Sphere, 4.0, 4.0, 0.001);
        spec.reflectivity = 0.3;
        let bump = ObjectModel::from_spec(&spec, 0.05).unwrap();
        let at = Placement { ping: 100, side: Side::Starboard, ground_range: 30.0, yaw: 0.0 };
        let (out, _) = insert_contact(&img, &bump, at, 5, &InsertConfig::default()).unwrap();
        let changed: Vec<f64> = out
            .intensities()
            .iter()
            .zip(img.intensities())
            .filter(|(a, b)| a != b)
            .map(|(a, _)| *a)
            .collect();
        assert!(changed.len() > 500);
        let mean = changed.iter().sum::<f64>() / changed.len() as f64;
        let bg = img.intensities().mean().unwrap();
        assert!((mean - bg).abs() / bg < 0.05, "{mean} vs {bg}");
    }

    #[test]
    fn nadir_and_edges_rejected() {
        let img = flat_image(0.4, 100, 1200);
        let m = cylinder(0.5);
        let at = |ping, ground_range| Placement { ping, side: Side::Starboard, ground_range, yaw: 0.0 };
        assert!(matches!(insert_contact(&img, &m, at(50, 0.5), 0, &quiet()), Err(InsertError::InsideNadir(_))));
        assert!(matches!(insert_contact(&img, &m, at(50, 58.9), 0, &quiet()), Err(InsertError::FootprintOutsideImage(_))));
        assert!(matches!(insert_contact(&img, &m, at(2, 30.0), 0, &quiet()), Err(InsertError::FootprintOutsideImage(_))));
        assert!(matches!(
            insert_contact(&img, &m, Placement { side: Side::Port, ..at(50, 30.0) }, 0, &quiet()),
            Err(InsertError::FootprintOutsideImage(_))
        ));
    }

    #[test]
    fn random_contacts_respect_separation() {
        let img = flat_image(0.3, 1000, 1200);
        let models = [cylinder(0.5)];
        let (_, recs) = insert_random_contacts(&img, &models, 10, Some(5.0), 11, &InsertConfig::default()).unwrap();
        assert_eq!(recs.len(), 10);
        for (i, a) in recs.iter().enumerate() {
            for b in &recs[i + 1..] {
                assert!((a.e - b.e).hypot(a.n - b.n) >= 5.0);
            }
        }
        let (_, again) = insert_random_contacts(&img, &models, 10, Some(5.0), 11, &InsertConfig::default()).unwrap();
        assert_eq!(recs, again);
    }

    #[test]
    fn random_contacts_pigeonhole() {
        let img = flat_image(0.3, 60, 300);
        let res = insert_random_contacts(&img, &[cylinder(0.5)], 1_000_000, None, 1, &InsertConfig::default());
        assert!(matches!(res, Err(InsertError::PlacementInfeasible { .. })));
    }
}
