//! CRC-32 (reflected, polynomial 0xEDB88320) over serialized metadata.

use serde::{Deserialize, Serialize};

use super::FeatureError;

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaChecksum {
    pub stored: u32,
}

impl MetaChecksum {
    pub fn commit(&mut self, meta: &[u8]) {
        self.stored = crc32(meta);
    }

    pub fn verify(&self, meta: &[u8]) -> Result<(), FeatureError> {
        let found = crc32(meta);
        if found == self.stored {
            Ok(())
        } else {
            Err(FeatureError::ChecksumMismatch { expected: self.stored, found })
        }
    }
}
