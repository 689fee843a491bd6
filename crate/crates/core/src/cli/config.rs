use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, ModelProfile, DEFAULT_ATTEMPT_LIMIT};
use crate::blockdev::WorkloadConfig;

/// Settings file for the command line. Every field is optional; flags win
/// over file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub spec_dir: Option<PathBuf>,
    pub patch: Option<PathBuf>,
    #[serde(default)]
    pub profiles: BTreeMap<String, ModelProfile>,
    pub attempt_limit: Option<u32>,
    pub cache_dir: Option<PathBuf>,
    /// Feature config file used by `fs exec` and `bench`.
    pub features: Option<PathBuf>,
    /// Workload parameters per workload kind name.
    #[serde(default)]
    pub bench: BTreeMap<String, WorkloadConfig>,
    pub seed: Option<u64>,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CACHE_DIR: &str = ".genfs-cache";

impl CliConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            profiles: self.profiles.clone(),
            attempt_limit: self.attempt_limit.unwrap_or(DEFAULT_ATTEMPT_LIMIT),
            cache_dir: self.cache_dir.clone(),
        }
    }
}
