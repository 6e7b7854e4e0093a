//! Terrain archetypes: heightfield, reflectivity and class truth.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum TerrainClass {
    FlatSand = 0,
    Mud = 1,
    SandRipples = 2,
    Clutter = 3,
    MarineGrowth = 4,
    RockOutcrop = 5,
}

/// Truth-raster value for pixels with no seafloor class (nadir, water column).
pub const NO_CLASS: u8 = 255;

impl TerrainClass {
    pub const ALL: [TerrainClass; 6] = [
        TerrainClass::FlatSand,
        TerrainClass::Mud,
        TerrainClass::SandRipples,
        TerrainClass::Clutter,
        TerrainClass::MarineGrowth,
        TerrainClass::RockOutcrop,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self, SimError> {
        Self::ALL.get(id as usize).copied().ok_or(SimError::UnknownClass(id.to_string()))
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainClass::FlatSand => "flat_sand",
            TerrainClass::Mud => "mud",
            TerrainClass::SandRipples => "sand_ripples",
            TerrainClass::Clutter => "clutter",
            TerrainClass::MarineGrowth => "marine_growth",
            TerrainClass::RockOutcrop => "rock_outcrop",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, SimError> {
        Self::ALL.iter().copied().find(|c| c.name() == name).ok_or_else(|| SimError::UnknownClass(name.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u8,
    pub name: String,
}

pub fn class_catalog() -> Vec<ClassEntry> {
    TerrainClass::ALL.iter().map(|c| ClassEntry { id: c.id(), name: c.name().into() }).collect()
}

/// Generation parameters. Only the fields relevant to the requested class are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainParams {
    /// Heightfield sample spacing in metres.
    pub resolution: f64,
    /// Standard deviation of the small-scale bed roughness (m).
    pub roughness: f64,
    /// Correlation length of the roughness (m).
    pub roughness_scale: f64,
    pub ripple_wavelength: f64,
    pub ripple_amplitude: f64,
    /// Direction of the ripple crests, radians anticlockwise from the easting axis.
    pub ripple_orientation: f64,
    /// Poisson intensity of clutter objects per m².
    pub clutter_density: f64,
    pub clutter_radius: [f64; 2],
    pub clutter_height: [f64; 2],
    /// Fraction of the bed covered by growth patches.
    pub growth_coverage: f64,
    pub growth_height: f64,
    /// Characteristic patch size (m).
    pub growth_scale: f64,
    pub rock_scale: f64,
    pub rock_height: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            roughness: 0.005,
            roughness_scale: 0.3,
            ripple_wavelength: 1.0,
            ripple_amplitude: 0.08,
            ripple_orientation: 0.0,
            clutter_density: 0.05,
            clutter_radius: [0.15, 0.4],
            clutter_height: [0.15, 0.4],
            growth_coverage: 0.45,
            growth_height: 0.35,
            growth_scale: 3.0,
            rock_scale: 10.0,
            rock_height: 1.5,
        }
    }
}

impl TerrainParams {
    fn validate(&self, class: TerrainClass) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidParams(what.into()));
        if !(self.resolution > 0.0) {
            return bad("resolution must be positive");
        }
        if !(self.roughness_scale > 0.0) {
            return bad("roughness scale must be positive");
        }
        if !(self.roughness >= 0.0) {
            return bad("roughness must be non-negative");
        }
        match class {
            TerrainClass::SandRipples if !(self.ripple_wavelength > 0.0) || !(self.ripple_amplitude >= 0.0) => {
                bad("ripple wavelength must be positive and amplitude non-negative")
            }
            TerrainClass::Clutter
                if !(self.clutter_density >= 0.0)
                    || !(self.clutter_radius[0] > 0.0 && self.clutter_radius[1] >= self.clutter_radius[0])
                    || !(self.clutter_height[0] >= 0.0 && self.clutter_height[1] >= self.clutter_height[0]) =>
            {
                bad("clutter density must be non-negative with ordered positive size ranges")
            }
            TerrainClass::MarineGrowth
                if !(0.0..=1.0).contains(&self.growth_coverage) || !(self.growth_height >= 0.0) || !(self.growth_scale > 0.0) =>
            {
                bad("growth coverage must be in [0,1], height non-negative, scale positive")
            }
            TerrainClass::RockOutcrop if !(self.rock_scale > 0.0) || !(self.rock_height >= 0.0) => {
                bad("rock scale must be positive and height non-negative")
            }
            _ => Ok(()),
        }
    }
}

/// A discrete relief feature placed on the bed (clutter object).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliefFeature {
    pub center: [f64; 2],
    pub radii: [f64; 2],
    pub yaw: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainPatch {
    pub class: TerrainClass,
    /// Sample spacing (m); sample `(row j, col i)` sits at `(i*res, j*res)` in the terrain frame.
    pub resolution: f64,
    pub heightfield: Array2<f64>,
    pub backscatter: Array2<f64>,
    pub truth: Array2<u8>,
    pub class_catalog: Vec<ClassEntry>,
    pub features: Vec<ReliefFeature>,
}

impl TerrainPatch {
    /// Terrain-frame extent `[easting, northing]` in metres.
    pub fn extent(&self) -> [f64; 2] {
        let (h, w) = self.heightfield.dim();
        [(w - 1) as f64 * self.resolution, (h - 1) as f64 * self.resolution]
    }

    pub fn contains(&self, e: f64, n: f64) -> bool {
        let [we, wn] = self.extent();
        (0.0..=we).contains(&e) && (0.0..=wn).contains(&n)
    }

    fn bilinear(&self, field: &Array2<f64>, e: f64, n: f64) -> f64 {
        let (h, w) = field.dim();
        let fx = (e / self.resolution).clamp(0.0, (w - 1) as f64);
        let fy = (n / self.resolution).clamp(0.0, (h - 1) as f64);
        let (i0, j0) = (fx.floor() as usize, fy.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(w - 1), (j0 + 1).min(h - 1));
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let a = field[[j0, i0]] * (1.0 - tx) + field[[j0, i1]] * tx;
        let b = field[[j1, i0]] * (1.0 - tx) + field[[j1, i1]] * tx;
        a * (1.0 - ty) + b * ty
    }

    pub fn height_at(&self, e: f64, n: f64) -> f64 {
        self.bilinear(&self.heightfield, e, n)
    }

    pub fn backscatter_at(&self, e: f64, n: f64) -> f64 {
        self.bilinear(&self.backscatter, e, n)
    }

    pub fn class_at(&self, e: f64, n: f64) -> u8 {
        let (h, w) = self.truth.dim();
        let i = ((e / self.resolution).round().max(0.0) as usize).min(w - 1);
        let j = ((n / self.resolution).round().max(0.0) as usize).min(h - 1);
        self.truth[[j, i]]
    }
}

/// Smoothly interpolated lattice noise in `[0, 1]`.
pub(crate) struct ValueNoise {
    lattice: Array2<f64>,
    scale: f64,
}

impl ValueNoise {
    pub(crate) fn new(extent: [f64; 2], scale: f64, rng: &mut impl Rng) -> Self {
        let w = (extent[0] / scale).ceil() as usize + 2;
        let h = (extent[1] / scale).ceil() as usize + 2;
        let lattice = Array2::from_shape_simple_fn((h, w), || rng.random::<f64>());
        Self { lattice, scale }
    }

    pub(crate) fn at(&self, e: f64, n: f64) -> f64 {
        let (h, w) = self.lattice.dim();
        let fx = (e / self.scale).clamp(0.0, (w - 1) as f64 - 1e-9);
        let fy = (n / self.scale).clamp(0.0, (h - 1) as f64 - 1e-9);
        let (i0, j0) = (fx.floor() as usize, fy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fx - i0 as f64), smooth(fy - j0 as f64));
        let l = &self.lattice;
        let a = l[[j0, i0]] * (1.0 - tx) + l[[j0, i0 + 1]] * tx;
        let b = l[[j0 + 1, i0]] * (1.0 - tx) + l[[j0 + 1, i0 + 1]] * tx;
        a * (1.0 - ty) + b * ty
    }
}

/// Sum of `octaves` noise layers, halving scale and amplitude each time; normalised to `[0, 1]`.
fn fractal(extent: [f64; 2], scale: f64, octaves: usize, rng: &mut impl Rng) -> impl Fn(f64, f64) -> f64 {
    let layers: Vec<ValueNoise> = (0..octaves).map(|o| ValueNoise::new(extent, scale / f64::powi(2.0, o as i32), rng)).collect();
    let norm: f64 = (0..octaves).map(|o| 0.5f64.powi(o as i32)).sum();
    move |e, n| layers.iter().enumerate().map(|(o, l)| 0.5f64.powi(o as i32) * l.at(e, n)).sum::<f64>() / norm
}

/// Zero-mean roughness with the requested standard deviation.
fn roughness_field(extent: [f64; 2], std: f64, scale: f64, rng: &mut impl Rng) -> impl Fn(f64, f64) -> f64 {
    let noise = ValueNoise::new(extent, scale, rng);
    // smoothstep-interpolated uniform lattice noise has std close to 0.2
    move |e, n| (noise.at(e, n) - 0.5) * (std / 0.2)
}

pub fn generate_terrain(class: TerrainClass, extent: [f64; 2], params: &TerrainParams, seed: u64) -> Result<TerrainPatch, SimError> {
    if !(extent[0] > 0.0 && extent[1] > 0.0) {
        return Err(SimError::InvalidParams(format!("extent must be positive, got {extent:?}")));
    }
    params.validate(class)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5EAF_1000 + class.id() as u64));
    let res = params.resolution;
    let w = (extent[0] / res).round() as usize + 1;
    let h = (extent[1] / res).round() as usize + 1;
    let mut heights = Array2::<f64>::zeros((h, w));
    let mut refl = Array2::<f64>::zeros((h, w));
    let mut features = Vec::new();

    let rough = roughness_field(extent, params.roughness, params.roughness_scale, &mut rng);
    let grain = ValueNoise::new(extent, 0.5, &mut rng);
    let fill = |heights: &mut Array2<f64>, refl: &mut Array2<f64>, f: &dyn Fn(f64, f64) -> (f64, f64)| {
        for ((j, i), z) in heights.indexed_iter_mut() {
            let (e, n) = (i as f64 * res, j as f64 * res);
            let (dz, b) = f(e, n);
            *z = dz;
            refl[[j, i]] = b;
        }
    };

    match class {
        TerrainClass::FlatSand => {
            fill(&mut heights, &mut refl, &|e, n| (rough(e, n), 0.45 * (0.9 + 0.2 * grain.at(e, n))));
        }
        TerrainClass::Mud => {
            fill(&mut heights, &mut refl, &|e, n| (0.5 * rough(e, n), 0.15 * (0.9 + 0.2 * grain.at(e, n))));
        }
        TerrainClass::SandRipples => {
            let (s, c) = params.ripple_orientation.sin_cos();
            let normal = [-s, c];
            let wobble = ValueNoise::new(extent, 6.0, &mut rng);
            let k = 2.0 * PI / params.ripple_wavelength;
            let amp = params.ripple_amplitude;
            fill(&mut heights, &mut refl, &|e, n| {
                let d = e * normal[0] + n * normal[1];
                let phase = 0.6 * (wobble.at(e, n) - 0.5);
                (amp * (k * d + phase).sin() + rough(e, n), 0.45 * (0.9 + 0.2 * grain.at(e, n)))
            });
        }
        TerrainClass::Clutter => {
            fill(&mut heights, &mut refl, &|e, n| (rough(e, n), 0.45 * (0.9 + 0.2 * grain.at(e, n))));
            let mean = params.clutter_density * extent[0] * extent[1];
            let count = if mean > 0.0 { Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize } else { 0 };
            for _ in 0..count {
                let f = ReliefFeature {
                    center: [rng.random::<f64>() * extent[0], rng.random::<f64>() * extent[1]],
                    radii: [
                        rng.random_range(params.clutter_radius[0]..=params.clutter_radius[1]),
                        rng.random_range(params.clutter_radius[0]..=params.clutter_radius[1]),
                    ],
                    yaw: rng.random::<f64>() * PI,
                    height: rng.random_range(params.clutter_height[0]..=params.clutter_height[1]),
                };
                stamp_ellipsoid(&mut heights, &mut refl, res, &f, 0.85);
                features.push(f);
            }
        }
        TerrainClass::MarineGrowth => {
            let patches = fractal(extent, params.growth_scale, 3, &mut rng);
            let detail = ValueNoise::new(extent, 0.25, &mut rng);
            let cut = coverage_threshold(&patches, extent, params.growth_coverage);
            let gh = params.growth_height;
            fill(&mut heights, &mut refl, &|e, n| {
                let v = patches(e, n);
                let t = ((v - cut) / 0.08).clamp(0.0, 1.0);
                let t = t * t * (3.0 - 2.0 * t);
                let d = detail.at(e, n);
                let z = gh * t * (0.5 + 0.8 * d) + rough(e, n);
                let b = 0.4 * (1.0 - t) + 0.9 * t * (0.6 + 0.6 * d);
                (z, b * (0.9 + 0.2 * grain.at(e, n)))
            });
        }
        TerrainClass::RockOutcrop => {
            let ridges = fractal(extent, params.rock_scale, 4, &mut rng);
            let crag = ValueNoise::new(extent, 0.4, &mut rng);
            let rh = params.rock_height;
            fill(&mut heights, &mut refl, &|e, n| {
                let v = ridges(e, n);
                let c = crag.at(e, n);
                let z = rh * ((v - 0.35) / 0.65).max(0.0) * 2.0 + 0.12 * (c - 0.5) + rough(e, n);
                (z, 0.7 * (0.7 + 0.6 * c) * (0.9 + 0.2 * grain.at(e, n)))
            });
        }
    }
    refl.mapv_inplace(|b| b.clamp(0.0, 1.0));
    Ok(TerrainPatch {
        class,
        resolution: res,
        heightfield: heights,
        backscatter: refl,
        truth: Array2::from_elem((h, w), class.id()),
        class_catalog: class_catalog(),
        features,
    })
}

/// Noise level above which a `coverage` fraction of a coarse sample lattice lies.
fn coverage_threshold(field: &impl Fn(f64, f64) -> f64, extent: [f64; 2], coverage: f64) -> f64 {
    let step = 0.5;
    let mut vals: Vec<f64> = Vec::new();
    let mut n = 0.0;
    while n <= extent[1] {
        let mut e = 0.0;
        while e <= extent[0] {
            vals.push(field(e, n));
            e += step;
        }
        n += step;
    }
    vals.sort_by(f64::total_cmp);
    if coverage <= 0.0 {
        return f64::INFINITY;
    }
    let k = ((1.0 - coverage) * (vals.len() - 1) as f64).round() as usize;
    vals[k.min(vals.len() - 1)]
}

fn stamp_ellipsoid(heights: &mut Array2<f64>, refl: &mut Array2<f64>, res: f64, f: &ReliefFeature, reflectivity: f64) {
    let (h, w) = heights.dim();
    let r = f.radii[0].max(f.radii[1]);
    let i0 = ((f.center[0] - r) / res).floor().max(0.0) as usize;
    let i1 = (((f.center[0] + r) / res).ceil() as usize).min(w - 1);
    let j0 = ((f.center[1] - r) / res).floor().max(0.0) as usize;
    let j1 = (((f.center[1] + r) / res).ceil() as usize).min(h - 1);
    let (s, c) = f.yaw.sin_cos();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let dx = i as f64 * res - f.center[0];
            let dy = j as f64 * res - f.center[1];
            let u = (c * dx + s * dy) / f.radii[0];
            let v = (-s * dx + c * dy) / f.radii[1];
            let q = 1.0 - u * u - v * v;
            if q > 0.0 {
                let z = f.height * q.sqrt();
                if z > heights[[j, i]] {
                    heights[[j, i]] = z;
                    refl[[j, i]] = reflectivity;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_dev(a: &Array2<f64>) -> f64 {
        let n = a.len() as f64;
        let m = a.sum() / n;
        (a.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn flat_sand_is_flat() {
        let t = generate_terrain(TerrainClass::FlatSand, [30.0, 30.0], &TerrainParams::default(), 3).unwrap();
        assert!(std_dev(&t.heightfield) < 0.02);
        assert!(t.truth.iter().all(|&c| c == 0));
    }

    #[test]
    fn ripple_autocorrelation_peaks_at_wavelength() {
        let params = TerrainParams { ripple_wavelength: 1.0, ripple_orientation: 0.0, ..Default::default() };
        let t = generate_terrain(TerrainClass::SandRipples, [20.0, 20.0], &params, 11).unwrap();
        // orientation 0: crests run along easting, so the normal is the northing axis (rows)
        let res = t.resolution;
        let (h, w) = t.heightfield.dim();
        let mean = t.heightfield.sum() / t.heightfield.len() as f64;
        let acf = |lag: usize| -> f64 {
            let mut s = 0.0;
            let mut n = 0.0;
            for i in 0..w {
                for j in 0..h - lag {
                    s += (t.heightfield[[j, i]] - mean) * (t.heightfield[[j + lag, i]] - mean);
                    n += 1.0;
                }
            }
            s / n
        };
        let lo = (0.5 / res).round() as usize;
        let hi = (1.5 / res).round() as usize;
        let best = (lo..=hi).max_by(|&a, &b| acf(a).total_cmp(&acf(b))).unwrap();
        assert!((best as f64 * res - 1.0).abs() <= res + 1e-9, "peak at {}", best as f64 * res);
    }

    #[test]
    fn clutter_count_is_poisson() {
        let params = TerrainParams { clutter_density: 0.05, resolution: 0.25, ..Default::default() };
        let t = generate_terrain(TerrainClass::Clutter, [100.0, 100.0], &params, 5).unwrap();
        let n = t.features.len() as f64;
        assert!((n - 500.0).abs() <= 3.0 * 500f64.sqrt(), "{n} instances");
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let p = TerrainParams::default();
        let a = generate_terrain(TerrainClass::MarineGrowth, [10.0, 10.0], &p, 1).unwrap();
        let b = generate_terrain(TerrainClass::MarineGrowth, [10.0, 10.0], &p, 1).unwrap();
        let c = generate_terrain(TerrainClass::MarineGrowth, [10.0, 10.0], &p, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.heightfield, c.heightfield);
    }

    #[test]
    fn invalid_params_and_classes() {
        let p = TerrainParams { ripple_wavelength: 0.0, ..Default::default() };
        assert!(matches!(generate_terrain(TerrainClass::SandRipples, [5.0, 5.0], &p, 0), Err(SimError::InvalidParams(_))));
        assert!(matches!(TerrainClass::from_id(9), Err(SimError::UnknownClass(_))));
        assert!(matches!(TerrainClass::from_name("lava"), Err(SimError::UnknownClass(_))));
        assert!(generate_terrain(TerrainClass::Mud, [0.0, 5.0], &TerrainParams::default(), 0).is_err());
    }

    #[test]
    fn growth_coverage_roughly_honoured() {
        let t = generate_terrain(TerrainClass::MarineGrowth, [40.0, 40.0], &TerrainParams::default(), 8).unwrap();
        let covered = t.heightfield.iter().filter(|&&z| z > 0.05).count() as f64 / t.heightfield.len() as f64;
        assert!((0.25..0.65).contains(&covered), "coverage {covered}");
    }
}
