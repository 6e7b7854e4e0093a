use std::fs;
use std::path::Path;

use seafloor::atr::DetectorConfig;
use seafloor::cluster::{KMeansConfig, TextureConfig};
use seafloor::perfmap::MonteCarloConfig;
use seafloor::repair::RepairConfig;
use seafloor::sim::MissionConfig;
use seafloor::snippet::SnippetSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Parameter sets read from `--config`. Every section is optional and
/// command-line flags override whatever is set here.
///
/// ```toml
/// seed = 7
/// [mission]
/// pings = 500
/// [montecarlo]
/// passes = 20
/// [kmeans]
/// clusters = 12
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub mission: MissionConfig,
    /// Detector settings; `detector.objects` is also the inserted object set.
    pub detector: DetectorConfig,
    pub montecarlo: MonteCarloConfig,
    pub snippet: SnippetSpec,
    pub texture: TextureConfig,
    pub kmeans: KMeansConfig,
    pub repair: RepairConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 3\n[montecarlo]\npasses = 4\n[kmeans]\nclusters = 6\n").unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.montecarlo.passes, 4);
        assert_eq!(cfg.montecarlo.contacts_per_pass, MonteCarloConfig::default().contacts_per_pass);
        assert_eq!(cfg.kmeans.clusters, 6);
        assert_eq!(cfg.detector, DetectorConfig::default());
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(toml::from_str::<RunConfig>("[bogus]\nx = 1\n").is_err());
    }
}
