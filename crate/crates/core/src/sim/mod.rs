//! Ground-truth seafloor simulator: terrain archetypes and side-scan rendering.

pub mod mission;
pub(crate) mod ray;
pub mod render;
pub mod terrain;

use thiserror::Error;

pub use mission::{generate_mission_set, load_mission_set, write_mission_set, Mission, MissionConfig, MissionManifest};
pub use render::{render_sidescan, Rendered, SensorModel};
pub use terrain::{generate_terrain, TerrainClass, TerrainParams, TerrainPatch, NO_CLASS};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown terrain class {0:?}")]
    UnknownClass(String),
    #[error("invalid terrain parameters: {0}")]
    InvalidParams(String),
    #[error("invalid sensor model: {0}")]
    InvalidSensor(String),
    #[error("trajectory out of bounds: {0}")]
    TrajectoryOutOfBounds(String),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
}
