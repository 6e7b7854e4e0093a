//! The six-archetype evaluation mission set.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::render::{render_sidescan, Rendered, SensorModel};
use super::terrain::{class_catalog, generate_terrain, ClassEntry, TerrainClass, TerrainParams};
use super::SimError;
use crate::image::{straight_track, SidescanImage};
use crate::raster::{self, RasterError};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub pings: usize,
    pub sensor: SensorModel,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self { pings: 1000, sensor: SensorModel::default() }
    }
}

/// Terrain parameters used for each archetype's mission.
pub fn mission_params(class: TerrainClass) -> TerrainParams {
    let base = TerrainParams::default();
    match class {
        TerrainClass::SandRipples => TerrainParams {
            ripple_wavelength: 1.2,
            ripple_amplitude: 0.08,
            ripple_orientation: FRAC_PI_2 - 0.35,
            ..base
        },
        TerrainClass::Clutter => TerrainParams { clutter_density: 0.8, ..base },
        TerrainClass::MarineGrowth => TerrainParams { growth_coverage: 0.8, growth_scale: 1.5, ..base },
        TerrainClass::FlatSand => TerrainParams {
            roughness: 0.03,
            roughness_scale: 0.5,
            ..base
        },
        _ => base,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    pub class: TerrainClass,
    pub rendered: Rendered,
}

/// One straight-line mission per archetype with a shared sensor.
pub fn generate_mission_set(seed: u64, config: &MissionConfig) -> Result<Vec<Mission>, SimError> {
    config.sensor.validate()?;
    let sensor = &config.sensor;
    let margin = 3.0;
    let start = [margin, margin];
    let reach = sensor.max_ground_range() + 1.0;
    let along = config.pings as f64 * sensor.ping_resolution;
    let extent = match sensor.side {
        crate::image::Side::FullSwath => [2.0 * (reach + margin), along + 2.0 * margin],
        _ => [reach + 2.0 * margin, along + 2.0 * margin],
    };
    let start = match sensor.side {
        crate::image::Side::FullSwath => [extent[0] / 2.0, start[1]],
        crate::image::Side::Port => [extent[0] - margin, start[1]],
        _ => start,
    };
    let trajectory = straight_track(start, 0.0, config.pings, sensor.ping_resolution);
    TerrainClass::ALL
        .par_iter()
        .map(|&class| {
            let terrain = generate_terrain(class, extent, &mission_params(class), derive_seed(seed, 2 * class.id() as u64))?;
            let mut rendered = render_sidescan(&terrain, &trajectory, sensor, derive_seed(seed, 2 * class.id() as u64 + 1))?;
            rendered.image.id = class.name().to_string();
            Ok(Mission { class, rendered })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEntry {
    pub class: String,
    pub class_id: u8,
    pub image: String,
    pub truth: String,
    pub image_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionManifest {
    pub seed: u64,
    pub pings: usize,
    pub sensor: SensorModel,
    pub classes: Vec<ClassEntry>,
    pub missions: Vec<MissionEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_mission_set(dir: &Path, missions: &[Mission], seed: u64, config: &MissionConfig) -> Result<MissionManifest, SimError> {
    fs::create_dir_all(dir).map_err(|source| RasterError::Io { path: dir.into(), source })?;
    let mut entries = Vec::new();
    for m in missions {
        let name = m.class.name();
        let image_file = format!("{name}.pgm");
        let truth_file = format!("{name}.truth.pgm");
        let image_path = dir.join(&image_file);
        raster::write_image(&image_path, &m.rendered.image)?;
        raster::write_labels(&dir.join(&truth_file), &m.rendered.truth)?;
        let bytes = fs::read(&image_path).map_err(|source| RasterError::Io { path: image_path.clone(), source })?;
        entries.push(MissionEntry {
            class: name.to_string(),
            class_id: m.class.id(),
            image: image_file,
            truth: truth_file,
            image_sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = MissionManifest {
        seed,
        pings: config.pings,
        sensor: config.sensor.clone(),
        classes: class_catalog(),
        missions: entries,
    };
    raster::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// A mission read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedMission {
    pub class: TerrainClass,
    pub image: SidescanImage<f64>,
    pub truth: Array2<u8>,
}

pub fn load_mission_set(dir: &Path) -> Result<(MissionManifest, Vec<LoadedMission>), SimError> {
    let manifest: MissionManifest = raster::read_json(&dir.join(MANIFEST_FILE))?;
    let missions = manifest
        .missions
        .iter()
        .map(|e| {
            let image = raster::read_image::<f64>(&dir.join(&e.image))?;
            let truth = raster::read_labels(&dir.join(&e.truth))?;
            if truth.dim() != image.intensities().dim() {
                return Err(RasterError::DimensionMismatch(format!("truth raster {} does not match image", e.truth)).into());
            }
            Ok(LoadedMission { class: TerrainClass::from_id(e.class_id)?, image, truth })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok((manifest, missions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::NO_CLASS;

    fn small() -> MissionConfig {
        MissionConfig { pings: 60, sensor: SensorModel { max_slant_range: 25.0, ..Default::default() } }
    }

    #[test]
    fn six_distinct_missions_with_pure_truth() {
        let missions = generate_mission_set(4, &small()).unwrap();
        assert_eq!(missions.len(), 6);
        let mut names: Vec<_> = missions.iter().map(|m| m.class.name()).collect();
        names.dedup();
        assert_eq!(names.len(), 6);
        for m in &missions {
            let classes: std::collections::BTreeSet<u8> = m.rendered.truth.iter().copied().filter(|&c| c != NO_CLASS).collect();
            assert_eq!(classes.into_iter().collect::<Vec<_>>(), vec![m.class.id()]);
        }
    }

    #[test]
    fn manifest_hashes_stable() {
        let cfg = small();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = write_mission_set(d1.path(), &generate_mission_set(7, &cfg).unwrap(), 7, &cfg).unwrap();
        let m2 = write_mission_set(d2.path(), &generate_mission_set(7, &cfg).unwrap(), 7, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.classes.len(), 6);
        let (back, loaded) = load_mission_set(d1.path()).unwrap();
        assert_eq!(back, m1);
        assert_eq!(loaded.len(), 6);
    }
}
