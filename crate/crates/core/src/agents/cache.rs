use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::compile::Attempt;
use super::prompt::Phase;
use super::AgentError;

/// Hex sha256 over length-prefixed fields, so no two field splits collide.
pub fn cache_key(module_text: &str, resolved_rely: &str, model_id: &str, phase: Phase) -> String {
    let mut h = Sha256::new();
    for field in [module_text, resolved_rely, model_id, phase.as_str()] {
        h.update((field.len() as u64).to_le_bytes());
        h.update(field.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub module: String,
    pub phase: Phase,
    pub code: String,
    pub transcript: Vec<Attempt>,
}

/// Validated code per key. With a directory, one `<key>.json` file per entry;
/// concurrent writers of one key race and the last rename wins.
#[derive(Debug, Default)]
pub struct CacheStore {
    dir: Option<PathBuf>,
    mem: RwLock<HashMap<String, CacheEntry>>,
}

impl CacheStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: &Path) -> Result<Self, AgentError> {
        fs::create_dir_all(dir).map_err(|e| AgentError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(CacheStore { dir: Some(dir.to_path_buf()), mem: RwLock::new(HashMap::new()) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        if let Some(e) = self.mem.read().get(key) {
            return Some(e.clone());
        }
        let text = fs::read_to_string(self.path(key)?).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        self.mem.write().insert(key.to_string(), entry.clone());
        Some(entry)
    }

    pub fn put(&self, key: &str, entry: CacheEntry) -> Result<(), AgentError> {
        if let Some(path) = self.path(key) {
            let tmp = path.with_extension(format!("tmp{:?}", std::thread::current().id()).replace(['(', ')'], ""));
            let text = serde_json::to_string_pretty(&entry).map_err(|e| AgentError::Cache(e.to_string()))?;
            fs::write(&tmp, text)
                .and_then(|_| fs::rename(&tmp, &path))
                .map_err(|e| AgentError::Cache(format!("{}: {e}", path.display())))?;
        }
        self.mem.write().insert(key.to_string(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mem.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
