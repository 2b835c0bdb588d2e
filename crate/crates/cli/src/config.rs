use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trustloop::pipeline::PipelineConfig;
use trustloop::rater::PopulationSpec;

use crate::Failure;

/// One file drives every subcommand. Missing sections take their defaults;
/// command-line flags win over anything set here.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RootConfig {
    pub seed: Option<u64>,
    pub bundle: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub build: PipelineConfig,
    pub serve: ServeSection,
    pub simulate: SimulateSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub host: String,
    pub port: u16,
    pub abandon_after_hours: i64,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection { host: "127.0.0.1".into(), port: 8080, abandon_after_hours: trustloop_service::service::ABANDON_AFTER_HOURS }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub sessions: usize,
    /// Inline population; `population_file` is used when this is absent.
    pub population: Option<PopulationSpec>,
    pub population_file: Option<PathBuf>,
    pub url: Option<String>,
    pub trace: Option<PathBuf>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { sessions: 44, population: None, population_file: None, url: None, trace: None }
    }
}

impl RootConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(RootConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Data(format!("bad config {}: {e}", path.display())))
    }
}
