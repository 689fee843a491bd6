//! Optional storage features layered on the simulated disk: block-map
//! strategies, inline data, pre-allocation, delayed allocation, metadata
//! checksums and timestamps.

pub mod blockmap;
pub mod checksum;
pub mod config;
pub mod delay;
pub mod extent;
pub mod indirect;
pub mod pool;
pub mod storage;
pub mod timestamps;

use thiserror::Error;

pub use blockmap::{extent_allocate, BlockMapHandle, BlockSource, IoRequest, MapStrategy, Mapping};
pub use checksum::{crc32, MetaChecksum};
pub use config::{BlockMapKind, DelayedConfig, FeatureConfig, PoolKind, PreallocConfig};
pub use delay::DelayBuffer;
pub use extent::{contiguity_classify, Extent, ExtentList};
pub use pool::{PoolRun, PreallocPool};
pub use storage::{DiskSource, FileData, Storage, PREALLOC_MAX};
pub use timestamps::{Clock, ManualClock, MonotonicClock, OpKind, Timestamps};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("range error: {0}")]
    RangeError(String),
    #[error("disk full")]
    DiskFull,
    #[error("checksum mismatch: expected {expected:#010x}, found {found:#010x}")]
    ChecksumMismatch { expected: u32, found: u32 },
}
