//! Seeded synthetic workloads replayed through a fresh file system.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::disk::{SimDisk, DEFAULT_BLOCKS, DEFAULT_BLOCK_SIZE};
use super::report::MetricsReport;
use crate::features::{FeatureConfig, FeatureError};
use crate::fs::{FsError, FsState, InodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    /// Many files, a `small_fraction` of them at most 128 bytes.
    SmallFile,
    /// One file written and read back whole, `ops` times each.
    LargeFile,
    /// Random short writes by interleaved files, then ranged reads.
    RandomThenRange,
    /// One block per file, then one block from each file's reservation.
    PoolStress,
    /// Page-sized writes to one file, then a sync.
    AppendBatch,
}

impl WorkloadKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "small_file" => WorkloadKind::SmallFile,
            "large_file" => WorkloadKind::LargeFile,
            "random_then_range" => WorkloadKind::RandomThenRange,
            "pool_stress" => WorkloadKind::PoolStress,
            "append_batch" => WorkloadKind::AppendBatch,
            _ => return None,
        })
    }
}

/// Inline-size boundary used to classify small files.
pub const SMALL_FILE_MAX: u64 = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub kind: WorkloadKind,
    pub files: usize,
    /// Bytes per file for large_file; upper size bound for small_file.
    pub file_size: u64,
    pub ops: usize,
    pub page_size: usize,
    /// append_batch: 0 appends, otherwise writes cycle over this many blocks.
    pub distinct_blocks: u64,
    pub small_fraction: f64,
    /// random_then_range: logical blocks each file spans.
    pub region_blocks: u64,
}

impl WorkloadConfig {
    fn base(kind: WorkloadKind) -> Self {
        WorkloadConfig {
            kind,
            files: 1,
            file_size: 0,
            ops: 0,
            page_size: DEFAULT_BLOCK_SIZE,
            distinct_blocks: 0,
            small_fraction: 0.0,
            region_blocks: 0,
        }
    }

    pub fn small_file(files: usize, small_fraction: f64) -> Self {
        WorkloadConfig { files, small_fraction, file_size: 16 * 1024, ..Self::base(WorkloadKind::SmallFile) }
    }

    pub fn large_file(file_size: u64, passes: usize) -> Self {
        WorkloadConfig { file_size, ops: passes, ..Self::base(WorkloadKind::LargeFile) }
    }

    pub fn random_then_range(files: usize, region_blocks: u64, writes: usize) -> Self {
        WorkloadConfig { files, region_blocks, ops: writes, ..Self::base(WorkloadKind::RandomThenRange) }
    }

    pub fn pool_stress(runs: usize) -> Self {
        WorkloadConfig { files: runs, ops: runs, ..Self::base(WorkloadKind::PoolStress) }
    }

    pub fn append_batch(writes: usize, distinct_blocks: u64) -> Self {
        WorkloadConfig { ops: writes, distinct_blocks, ..Self::base(WorkloadKind::AppendBatch) }
    }

    /// Defaults used by the command line for each kind.
    pub fn default_for(kind: WorkloadKind) -> Self {
        match kind {
            WorkloadKind::SmallFile => Self::small_file(1000, 0.5),
            WorkloadKind::LargeFile => Self::large_file(1 << 20, 1),
            WorkloadKind::RandomThenRange => Self::random_then_range(2, 512, 512),
            WorkloadKind::PoolStress => Self::pool_stress(1024),
            WorkloadKind::AppendBatch => Self::append_batch(1000, 0),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.page_size == 0 {
            return Err("page_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.small_fraction) {
            return Err("small_fraction must be within [0, 1]".into());
        }
        let need_files = !matches!(self.kind, WorkloadKind::LargeFile | WorkloadKind::AppendBatch);
        if need_files && self.files == 0 {
            return Err("files must be positive".into());
        }
        if self.kind == WorkloadKind::RandomThenRange && self.region_blocks == 0 {
            return Err("region_blocks must be positive".into());
        }
        if self.kind == WorkloadKind::SmallFile && self.file_size <= SMALL_FILE_MAX && self.small_fraction < 1.0 {
            return Err("file_size must exceed 128 bytes when large files are drawn".into());
        }
        Ok(())
    }
}

fn name(i: usize) -> String {
    format!("f{i:05}")
}

fn bytes(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    let mut v = vec![0u8; n];
    rng.fill_bytes(&mut v);
    v
}

struct Ctx {
    fs: FsState,
    disk: Arc<SimDisk>,
    rng: ChaCha8Rng,
    disk_full: bool,
    verified: bool,
    passes: u64,
    small_files: Vec<usize>,
}

impl Ctx {
    fn create(&mut self, i: usize) {
        self.fs.ins(&[], &name(i), InodeKind::File);
    }

    /// False once the disk is full; the workload stops there.
    fn write(&mut self, i: usize, off: u64, data: &[u8]) -> bool {
        match self.fs.try_write(&[&name(i)], off, data) {
            Ok(_) => true,
            Err(FsError::Feature(FeatureError::DiskFull)) => {
                self.disk_full = true;
                false
            }
            Err(e) => panic!("workload write failed: {e}"),
        }
    }

    fn read(&mut self, i: usize, off: u64, len: u64) -> Vec<u8> {
        self.fs.read(&[&name(i)], off, len).unwrap_or_default()
    }
}

/// Runs `cfg` on a fresh 256 MiB disk with `features`. Deterministic per
/// seed. Running out of space sets `disk_full` and ends the run early.
pub fn run_workload(cfg: &WorkloadConfig, features: &FeatureConfig, seed: u64) -> Result<MetricsReport, String> {
    run_workload_on(cfg, features, seed, Arc::new(SimDisk::new(DEFAULT_BLOCKS, DEFAULT_BLOCK_SIZE)))
}

pub fn run_workload_on(
    cfg: &WorkloadConfig,
    features: &FeatureConfig,
    seed: u64,
    disk: Arc<SimDisk>,
) -> Result<MetricsReport, String> {
    cfg.validate()?;
    let fs = FsState::with_disk(disk.clone(), *features);
    let mut c = Ctx {
        fs,
        disk,
        rng: ChaCha8Rng::seed_from_u64(seed),
        disk_full: false,
        verified: true,
        passes: 0,
        small_files: Vec::new(),
    };
    match cfg.kind {
        WorkloadKind::SmallFile => small_file(&mut c, cfg),
        WorkloadKind::LargeFile => large_file(&mut c, cfg),
        WorkloadKind::RandomThenRange => random_then_range(&mut c, cfg),
        WorkloadKind::PoolStress => pool_stress(&mut c, cfg),
        WorkloadKind::AppendBatch => append_batch(&mut c, cfg),
    }
    c.fs.sync();
    Ok(finish(c, cfg, features, seed))
}

fn small_file(c: &mut Ctx, cfg: &WorkloadConfig) {
    let mut expect = Vec::new();
    for i in 0..cfg.files {
        let small = c.rng.random_bool(cfg.small_fraction);
        let size = if small {
            c.rng.random_range(1..=SMALL_FILE_MAX)
        } else {
            c.rng.random_range(SMALL_FILE_MAX + 1..=cfg.file_size)
        };
        if small {
            c.small_files.push(i);
        }
        c.create(i);
        let data = bytes(&mut c.rng, size as usize);
        for (k, chunk) in data.chunks(cfg.page_size).enumerate() {
            if !c.write(i, (k * cfg.page_size) as u64, chunk) {
                return;
            }
        }
        expect.push(data);
    }
    for (i, data) in expect.iter().enumerate() {
        c.verified &= c.read(i, 0, data.len() as u64) == *data;
    }
}

fn large_file(c: &mut Ctx, cfg: &WorkloadConfig) {
    c.create(0);
    for _ in 0..cfg.ops.max(1) {
        let data = bytes(&mut c.rng, cfg.file_size as usize);
        if !c.write(0, 0, &data) {
            return;
        }
        c.passes += 1;
        c.verified &= c.read(0, 0, cfg.file_size) == data;
        c.passes += 1;
    }
}

fn random_then_range(c: &mut Ctx, cfg: &WorkloadConfig) {
    let ps = cfg.page_size as u64;
    let mut model: Vec<Vec<u8>> = vec![Vec::new(); cfg.files];
    for i in 0..cfg.files {
        c.create(i);
    }
    for k in 0..cfg.ops {
        let i = k % cfg.files;
        let blocks = c.rng.random_range(1..=4u64).min(cfg.region_blocks);
        let start = c.rng.random_range(0..=cfg.region_blocks - blocks);
        let data = bytes(&mut c.rng, (blocks * ps) as usize);
        if !c.write(i, start * ps, &data) {
            return;
        }
        let m = &mut model[i];
        let end = ((start + blocks) * ps) as usize;
        if m.len() < end {
            m.resize(end, 0);
        }
        m[(start * ps) as usize..end].copy_from_slice(&data);
    }
    let range = 8 * ps;
    for (i, m) in model.iter().enumerate() {
        let mut off = 0;
        while off < m.len() as u64 {
            let got = c.read(i, off, range);
            let hi = (off + range).min(m.len() as u64) as usize;
            c.verified &= got == m[off as usize..hi];
            off += range;
        }
    }
}

fn pool_stress(c: &mut Ctx, cfg: &WorkloadConfig) {
    let ps = cfg.page_size;
    for i in 0..cfg.files {
        c.create(i);
        let data = bytes(&mut c.rng, ps);
        if !c.write(i, 0, &data) {
            return;
        }
    }
    let mut order: Vec<usize> = (0..cfg.files).collect();
    order.shuffle(&mut c.rng);
    for &i in order.iter().cycle().take(cfg.ops) {
        let data = bytes(&mut c.rng, ps);
        if !c.write(i, ps as u64, &data) {
            return;
        }
        c.verified &= c.read(i, ps as u64, ps as u64) == data;
    }
}

fn append_batch(c: &mut Ctx, cfg: &WorkloadConfig) {
    let ps = cfg.page_size as u64;
    c.create(0);
    let mut last = std::collections::BTreeMap::new();
    for k in 0..cfg.ops as u64 {
        let block = if cfg.distinct_blocks == 0 { k } else { k % cfg.distinct_blocks };
        let data = bytes(&mut c.rng, ps as usize);
        if !c.write(0, block * ps, &data) {
            return;
        }
        last.insert(block, data);
    }
    for (b, data) in &last {
        c.verified &= c.read(0, b * ps, ps) == *data;
    }
}

fn finish(c: Ctx, cfg: &WorkloadConfig, features: &FeatureConfig, seed: u64) -> MetricsReport {
    let counters = c.disk.counters();
    let mut digest = Sha256::new();
    let mut small_file_blocks = 0;
    let files = match cfg.kind {
        WorkloadKind::LargeFile | WorkloadKind::AppendBatch => 1,
        _ => cfg.files,
    };
    for i in 0..files {
        let info = c.fs.with_file(&[&name(i)], |s, f| (s.owned_blocks(f), f.map.extents()));
        if let Some((owned, extents)) = info {
            if c.small_files.binary_search(&i).is_ok() {
                small_file_blocks += owned;
            }
            for e in extents {
                digest.update(i.to_le_bytes());
                digest.update(e.logical.to_le_bytes());
                digest.update(e.physical.to_le_bytes());
                digest.update(e.len.to_le_bytes());
            }
        }
    }
    let pool_visits = c.fs.storage().pool_visits();
    MetricsReport::new(
        cfg.clone(),
        *features,
        seed,
        counters,
        pool_visits,
        c.disk.allocated_blocks(),
        small_file_blocks,
        c.passes,
        hex::encode(digest.finalize()),
        c.verified,
        c.disk_full,
    )
}
