use std::path::PathBuf;

use seafloor::atr::AtrError;
use seafloor::cluster::ClusterError;
use seafloor::grid::GridError;
use seafloor::image::SonarError;
use seafloor::insert::InsertError;
use seafloor::perfmap::PerfError;
use seafloor::raster::RasterError;
use seafloor::repair::RepairError;
use seafloor::sim::SimError;
use serde_json::json;
use thiserror::Error;

/// Failure of one invocation, already sorted into the three exit classes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Domain(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Domain(_) => "domain",
        }
    }

    pub fn to_json(&self, command: Option<&str>) -> String {
        json!({ "error": self.kind(), "command": command, "message": self.to_string(), "exit_code": self.exit_code() }).to_string()
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn missing(path: PathBuf) -> Self {
        CliError::Io(format!("{}: no such file or directory", path.display()))
    }
}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::Image(_) | RasterError::Grid(_) => CliError::Domain(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Raster(r) => r.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::Raster(r) => r.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

macro_rules! domain_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        })*
    };
}

domain_errors!(AtrError, GridError, SonarError, InsertError, PerfError, RepairError);
