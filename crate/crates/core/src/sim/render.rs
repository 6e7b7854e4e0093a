//! Side-scan rendering of a terrain patch along a trajectory.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ray::{Echo, Ray};
use super::terrain::{TerrainPatch, NO_CLASS};
use super::SimError;
use crate::image::{NavPose, Side, SidescanImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    pub altitude: f64,
    pub max_slant_range: f64,
    pub bin_resolution: f64,
    pub ping_resolution: f64,
    pub side: Side,
    /// Scale of the multiplicative exponential speckle; 0 disables it.
    pub speckle_strength: f64,
    /// Range attenuation coefficient β in `exp(-β·slant)`.
    pub beam_attenuation: f64,
    /// Fraction of spreading/attenuation loss left uncompensated by the time-varying gain.
    pub tvg_residual: f64,
    /// Mean of the additive receiver noise.
    pub noise_floor: f64,
    pub shadow_floor: f64,
    /// Along-track beam width (rad); the along-track footprint grows as `beam_width·slant`.
    pub beam_width: f64,
    pub gain: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            altitude: 10.0,
            max_slant_range: 60.0,
            bin_resolution: 0.05,
            ping_resolution: 0.1,
            side: Side::Starboard,
            speckle_strength: 0.6,
            beam_attenuation: 0.01,
            tvg_residual: 0.35,
            noise_floor: 0.02,
            shadow_floor: 0.02,
            beam_width: 0.03,
            gain: 1.0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.altitude > 0.0
            && self.max_slant_range > self.altitude
            && self.bin_resolution > 0.0
            && self.ping_resolution > 0.0
            && self.speckle_strength >= 0.0
            && self.beam_attenuation >= 0.0
            && (0.0..=1.0).contains(&self.tvg_residual)
            && self.noise_floor >= 0.0
            && (0.0..=1.0).contains(&self.shadow_floor)
            && self.beam_width >= 0.0
            && self.gain > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidSensor(format!("{self:?}")))
        }
    }

    pub fn bins_per_side(&self) -> usize {
        (self.max_slant_range / self.bin_resolution).round() as usize
    }

    pub fn max_ground_range(&self) -> f64 {
        (self.max_slant_range.powi(2) - self.altitude.powi(2)).sqrt()
    }

    /// Receive gain after the imperfect time-varying gain, applied to `reflectivity·cos(incidence)`.
    pub fn range_gain(&self, slant: f64) -> f64 {
        let loss = (-self.beam_attenuation * slant).exp();
        let tvg = ((slant / self.altitude) * (self.beam_attenuation * slant).exp()).powf(1.0 - self.tvg_residual);
        self.gain * loss * tvg
    }

    pub(crate) fn ray(&self) -> Ray {
        Ray { altitude: self.altitude, step: 0.5 * self.bin_resolution, bin_resolution: self.bin_resolution }
    }

    /// Along-track averaging half-width (pings) at a slant range.
    pub fn beam_half_width(&self, slant: f64) -> usize {
        let w = (self.beam_width * slant / self.ping_resolution).round() as usize;
        w / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: SidescanImage<f64>,
    /// Terrain class under each pixel, [`NO_CLASS`] in the nadir gap.
    pub truth: Array2<u8>,
}

/// Speckle-free intensities of one side of one ping, plus per-bin truth.
fn render_ping_side(terrain: &TerrainPatch, pose: &NavPose, side: Side, sensor: &SensorModel) -> (Vec<f64>, Vec<u8>) {
    let ray = sensor.ray();
    let nb = sensor.bins_per_side();
    let samples = (sensor.max_ground_range() / ray.step).ceil() as usize + (1.0 / ray.step) as usize;
    let dir = pose.across(side);
    let point = |k: usize| {
        let x = ray.ground(k);
        (pose.e + x * dir[0], pose.n + x * dir[1])
    };
    let mut heights = Vec::with_capacity(samples);
    let mut reflect = Vec::with_capacity(samples);
    for k in 0..samples {
        let (e, n) = point(k);
        heights.push(terrain.height_at(e, n));
        reflect.push(terrain.backscatter_at(e, n));
    }
    let mut echoes = vec![Echo::default(); nb];
    let mut truth = vec![NO_CLASS; nb];
    ray.cast(&heights, &reflect, 0..samples, |s| sensor.range_gain(s), &mut echoes, |k, bin, _| {
        if truth[bin] == NO_CLASS {
            let (e, n) = point(k);
            truth[bin] = terrain.class_at(e, n);
        }
    });
    let mut values = vec![0.0; nb];
    let mut last: Option<(f64, u8)> = None;
    for b in 0..nb {
        if !echoes[b].is_empty() {
            values[b] = echoes[b].value(sensor.shadow_floor);
            last = Some((values[b], truth[b]));
        } else if let Some((v, c)) = last {
            // layover gap inside the swath
            values[b] = v;
            truth[b] = c;
        }
    }
    (values, truth)
}

/// Box average along pings with a slant-dependent width, per column.
pub(crate) fn beam_blur(clean: &mut Array2<f64>, half_width: impl Fn(usize) -> usize + Sync) {
    let pings = clean.nrows();
    clean.axis_iter_mut(Axis(1)).into_par_iter().enumerate().for_each(|(col, mut column)| {
        let half = half_width(col);
        if half == 0 {
            return;
        }
        let mut prefix = Vec::with_capacity(pings + 1);
        prefix.push(0.0);
        for p in 0..pings {
            prefix.push(prefix[p] + column[p]);
        }
        for p in 0..pings {
            let lo = p.saturating_sub(half);
            let hi = (p + half + 1).min(pings);
            column[p] = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        }
    });
}

/// Multiplicative speckle and additive noise, counter-seeded per ping.
pub(crate) fn add_noise(image: &mut Array2<f64>, speckle: f64, noise_floor: f64, seed: u64) {
    image.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(p, mut row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        for v in row.iter_mut() {
            let e: f64 = Exp1.sample(&mut rng);
            let n: f64 = Exp1.sample(&mut rng);
            let s = (1.0 + speckle * (e - 1.0)).max(0.0);
            *v = (*v * s + noise_floor * n).clamp(0.0, 1.0);
        }
    });
}

pub fn render_sidescan(
    terrain: &TerrainPatch,
    trajectory: &[NavPose],
    sensor: &SensorModel,
    seed: u64,
) -> Result<Rendered, SimError> {
    sensor.validate()?;
    if trajectory.is_empty() {
        return Err(SimError::TrajectoryOutOfBounds("empty trajectory".into()));
    }
    let sides: &[Side] = match sensor.side {
        Side::FullSwath => &[Side::Port, Side::Starboard],
        Side::Port => &[Side::Port],
        Side::Starboard => &[Side::Starboard],
    };
    let reach = sensor.max_ground_range();
    for (p, pose) in trajectory.iter().enumerate() {
        for &side in sides {
            let d = pose.across(side);
            let far = (pose.e + reach * d[0], pose.n + reach * d[1]);
            if !terrain.contains(pose.e, pose.n) || !terrain.contains(far.0, far.1) {
                return Err(SimError::TrajectoryOutOfBounds(format!("ping {p} swath leaves the terrain")));
            }
        }
    }
    let nb = sensor.bins_per_side();
    let cols = nb * sides.len();
    let rows: Vec<(Vec<f64>, Vec<u8>)> = trajectory
        .par_iter()
        .map(|pose| {
            let mut vals = vec![0.0; cols];
            let mut truth = vec![NO_CLASS; cols];
            for &side in sides {
                let (v, t) = render_ping_side(terrain, pose, side, sensor);
                for k in 0..nb {
                    let c = column_of(sensor.side, nb, side, k);
                    vals[c] = v[k];
                    truth[c] = t[k];
                }
            }
            (vals, truth)
        })
        .collect();
    let pings = trajectory.len();
    let mut clean = Array2::from_shape_fn((pings, cols), |(p, c)| rows[p].0[c]);
    let truth = Array2::from_shape_fn((pings, cols), |(p, c)| rows[p].1[c]);

    beam_blur(&mut clean, |col| {
        let k = slant_index(sensor.side, nb, col);
        sensor.beam_half_width((k as f64 + 0.5) * sensor.bin_resolution)
    });
    add_noise(&mut clean, sensor.speckle_strength, sensor.noise_floor, seed);

    let image = SidescanImage::new(
        format!("{}-{seed}", terrain.class.name()),
        clean,
        sensor.bin_resolution,
        sensor.ping_resolution,
        Some(sensor.altitude),
        trajectory.to_vec(),
        sensor.side,
    )
    .map_err(|e| SimError::InvalidSensor(e.to_string()))?;
    Ok(Rendered { image, truth })
}

fn column_of(layout: Side, nb: usize, side: Side, k: usize) -> usize {
    match (layout, side) {
        (Side::FullSwath, Side::Port) => nb - 1 - k,
        (Side::FullSwath, _) => nb + k,
        _ => k,
    }
}

fn slant_index(layout: Side, nb: usize, col: usize) -> usize {
    match layout {
        Side::FullSwath if col < nb => nb - 1 - col,
        Side::FullSwath => col - nb,
        _ => col,
    }
}
