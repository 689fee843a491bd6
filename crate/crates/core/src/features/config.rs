use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockMapKind {
    #[default]
    Indirect,
    Extent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    #[default]
    List,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreallocConfig {
    pub enabled: bool,
    pub pool: PoolKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayedConfig {
    pub enabled: bool,
    pub limit_blocks: usize,
}

impl Default for DelayedConfig {
    fn default() -> Self {
        DelayedConfig { enabled: false, limit_blocks: 64 }
    }
}

/// Feature switches read once when a file system is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub block_map: BlockMapKind,
    /// Files up to this many bytes live inside the inode; 0 disables.
    pub inline_threshold: usize,
    pub prealloc: PreallocConfig,
    pub delayed: DelayedConfig,
    pub checksums: bool,
    pub timestamps: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            block_map: BlockMapKind::Indirect,
            inline_threshold: 128,
            prealloc: PreallocConfig::default(),
            delayed: DelayedConfig::default(),
            checksums: false,
            timestamps: false,
        }
    }
}

impl FeatureConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
