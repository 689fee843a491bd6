use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub const DEFAULT_ATTEMPT_LIMIT: u32 = 3;

/// One HTTP model endpoint. The credential itself never appears in config,
/// only the name of the environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub endpoint: String,
    pub model_id: String,
    pub api_key_env: String,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub profiles: BTreeMap<String, ModelProfile>,
    #[serde(default = "default_limit")]
    pub attempt_limit: u32,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_limit() -> u32 {
    DEFAULT_ATTEMPT_LIMIT
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { profiles: BTreeMap::new(), attempt_limit: DEFAULT_ATTEMPT_LIMIT, cache_dir: None }
    }
}
