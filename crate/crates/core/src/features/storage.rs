//! File data storage over a [`SimDisk`] with the configured feature set.
//!
//! Callers serialize access to one [`FileData`] (the inode lock). The pool
//! and the delay buffer each have their own lock; neither is held while the
//! other is taken.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::Serialize;

use super::blockmap::{BlockMapHandle, BlockSource, MapStrategy};
use super::checksum::MetaChecksum;
use super::config::FeatureConfig;
use super::delay::DelayBuffer;
use super::extent::contiguity_classify;
use super::pool::PreallocPool;
use super::timestamps::{Clock, MonotonicClock, OpKind, Timestamps};
use super::FeatureError;
use crate::blockdev::{Run, SimDisk};

/// Upper bound on blocks reserved past an allocation.
pub const PREALLOC_MAX: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileData {
    pub id: u64,
    pub size: u64,
    pub map: BlockMapHandle,
    pub times: Timestamps,
    pub checksum: Option<MetaChecksum>,
}

impl FileData {
    /// Canonical little-endian serialization of the metadata the checksum
    /// covers: id, size, strategy, timestamps, mapping and inline bytes.
    pub fn meta_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut put = |v: u64| out.extend_from_slice(&v.to_le_bytes());
        put(self.id);
        put(self.size);
        put(match self.map.strategy {
            MapStrategy::Indirect => 0,
            MapStrategy::Extent => 1,
            MapStrategy::Inline => 2,
        });
        put(self.times.atime);
        put(self.times.mtime);
        put(self.times.ctime);
        let extents = self.map.extents();
        put(extents.len() as u64);
        for e in &extents {
            put(e.logical);
            put(e.physical);
            put(e.len);
        }
        let index = self.map.index_blocks();
        put(index.len() as u64);
        for b in index {
            put(b);
        }
        put(self.map.inline_data.len() as u64);
        out.extend_from_slice(&self.map.inline_data);
        out
    }
}

pub struct Storage {
    disk: Arc<SimDisk>,
    cfg: FeatureConfig,
    pool: Mutex<PreallocPool>,
    delay: Mutex<DelayBuffer>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Storage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Storage").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

/// Allocates from `owner`'s pool reservations first, then first-fit from
/// the disk, reserving up to [`PREALLOC_MAX`] blocks past fresh runs when a
/// pool is given.
pub struct DiskSource<'a> {
    disk: &'a SimDisk,
    pool: Option<&'a Mutex<PreallocPool>>,
    owner: u64,
}

impl<'a> DiskSource<'a> {
    pub fn new(disk: &'a SimDisk, pool: Option<&'a Mutex<PreallocPool>>, owner: u64) -> Self {
        DiskSource { disk, pool, owner }
    }

    fn rollback(&self, runs: &[Run]) {
        for r in runs {
            self.disk.free_run(*r);
        }
    }
}

impl BlockSource for DiskSource<'_> {
    fn data_blocks(&mut self, logical: u64, len: u64) -> Result<Vec<Run>, FeatureError> {
        let mut runs = Vec::new();
        let (mut cur, mut left) = (logical, len);
        if let Some(pool) = self.pool {
            let mut p = pool.lock();
            while left > 0 {
                let Some(r) = p.take(self.owner, cur, left) else { break };
                runs.push(r.run());
                cur += r.len;
                left -= r.len;
            }
        }
        let fresh = left;
        while left > 0 {
            let Some(r) = self.disk.alloc_run(left) else {
                self.rollback(&runs);
                return Err(FeatureError::DiskFull);
            };
            runs.push(r);
            left -= r.len;
        }
        if fresh > 0 {
            if let Some(pool) = self.pool {
                let k = fresh.min(PREALLOC_MAX);
                let after = runs.last().expect("fresh blocks allocated").end();
                if let Some(extra) = self.disk.alloc_at(after, k).or_else(|| self.disk.alloc_run(k)) {
                    if !pool.lock().reserve(self.owner, logical + len, extra) {
                        self.disk.free_run(extra);
                    }
                }
            }
        }
        Ok(runs)
    }

    fn index_block(&mut self) -> Result<u64, FeatureError> {
        self.disk.alloc_run(1).map(|r| r.start).ok_or(FeatureError::DiskFull)
    }
}

impl Storage {
    pub fn new(disk: Arc<SimDisk>, cfg: FeatureConfig) -> Self {
        Storage::with_clock(disk, cfg, Arc::new(MonotonicClock::default()))
    }

    pub fn with_clock(disk: Arc<SimDisk>, cfg: FeatureConfig, clock: Arc<dyn Clock>) -> Self {
        Storage {
            disk,
            pool: Mutex::new(PreallocPool::new(cfg.prealloc.pool)),
            delay: Mutex::new(DelayBuffer::new(cfg.delayed.limit_blocks)),
            cfg,
            clock,
        }
    }

    pub fn disk(&self) -> &Arc<SimDisk> {
        &self.disk
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn pool_visits(&self) -> u64 {
        self.pool.lock().visits()
    }

    pub fn pool_snapshot(&self) -> PreallocPool {
        self.pool.lock().clone()
    }

    pub fn pending_blocks(&self) -> usize {
        self.delay.lock().len()
    }

    pub fn new_file(&self, id: u64) -> FileData {
        let strategy = if self.cfg.inline_threshold > 0 { MapStrategy::Inline } else { self.cfg.block_map.into() };
        let mut f =
            FileData { id, size: 0, map: BlockMapHandle::new(strategy), times: Timestamps::default(), checksum: None };
        self.touch(&mut f, OpKind::Data);
        self.commit(&mut f);
        f
    }

    fn touch(&self, f: &mut FileData, op: OpKind) {
        if self.cfg.timestamps {
            f.times.touch(op, &*self.clock);
        }
    }

    fn commit(&self, f: &mut FileData) {
        if self.cfg.checksums {
            let meta = f.meta_bytes();
            f.checksum.get_or_insert_with(MetaChecksum::default).commit(&meta);
        }
    }

    /// Recomputes the metadata checksum and compares it with the stored one.
    pub fn verify(&self, f: &FileData) -> Result<(), FeatureError> {
        match &f.checksum {
            Some(c) => c.verify(&f.meta_bytes()),
            None => Ok(()),
        }
    }

    /// Data and index blocks currently owned by `f`.
    pub fn owned_blocks(&self, f: &FileData) -> u64 {
        f.map.extents().iter().map(|e| e.len).sum::<u64>() + f.map.index_blocks().len() as u64
    }

    fn allocator(&self, owner: u64) -> DiskSource<'_> {
        DiskSource { disk: &self.disk, pool: self.cfg.prealloc.enabled.then_some(&self.pool), owner }
    }

    pub fn write(&self, f: &mut FileData, off: u64, data: &[u8]) -> Result<usize, FeatureError> {
        let end = off
            .checked_add(data.len() as u64)
            .ok_or_else(|| FeatureError::RangeError(format!("write at {off} overflows")))?;
        if data.is_empty() {
            return Ok(0);
        }
        if f.map.strategy == MapStrategy::Inline {
            if end <= self.cfg.inline_threshold as u64 {
                let buf = &mut f.map.inline_data;
                if buf.len() < end as usize {
                    buf.resize(end as usize, 0);
                }
                buf[off as usize..end as usize].copy_from_slice(data);
                f.size = f.size.max(end);
                self.touch(f, OpKind::Data);
                self.commit(f);
                return Ok(data.len());
            }
            self.promote(f)?;
        }
        self.write_blocks(f, off, data)?;
        f.size = f.size.max(end);
        self.touch(f, OpKind::Data);
        self.commit(f);
        Ok(data.len())
    }

    /// Moves inline contents to the configured block strategy.
    pub fn promote(&self, f: &mut FileData) -> Result<(), FeatureError> {
        if f.map.strategy != MapStrategy::Inline {
            return Ok(());
        }
        let old = std::mem::take(&mut f.map.inline_data);
        f.map.strategy = self.cfg.block_map.into();
        if !old.is_empty() {
            if let Err(e) = self.write_blocks(f, 0, &old) {
                f.map.strategy = MapStrategy::Inline;
                f.map.inline_data = old;
                return Err(e);
            }
        }
        Ok(())
    }

    fn write_blocks(&self, f: &mut FileData, off: u64, data: &[u8]) -> Result<(), FeatureError> {
        let bs = self.disk.block_size() as u64;
        let end = off + data.len() as u64;
        let (b0, b1) = (off / bs, end.div_ceil(bs));
        let was_mapped: Vec<bool> = (b0..b1).map(|l| f.map.lookup(l).is_some()).collect();
        let mapping = f.map.map_write(b0, b1 - b0, &mut self.allocator(f.id))?;
        self.disk.count_meta(mapping.meta_reads, mapping.meta_writes);
        for req in &mapping.requests {
            let mut bytes = vec![0u8; (req.len * bs) as usize];
            for i in 0..req.len {
                let l = req.logical + i;
                let (lo, hi) = ((l * bs).max(off), ((l + 1) * bs).min(end));
                let dst = &mut bytes[(i * bs) as usize..((i + 1) * bs) as usize];
                if hi - lo < bs && was_mapped[(l - b0) as usize] {
                    dst.copy_from_slice(&self.block_contents(f.id, l, req.physical + i));
                }
                dst[(lo - l * bs) as usize..(hi - l * bs) as usize]
                    .copy_from_slice(&data[(lo - off) as usize..(hi - off) as usize]);
            }
            if self.cfg.delayed.enabled {
                let mut d = self.delay.lock();
                for i in 0..req.len {
                    let blk = bytes[(i * bs) as usize..((i + 1) * bs) as usize].into();
                    d.put(&self.disk, f.id, req.logical + i, req.physical + i, blk);
                }
            } else {
                self.disk.write_run(Run { start: req.physical, len: req.len }, &bytes);
            }
        }
        self.disk.classify(contiguity_classify(b0, b1 - b0, &f.map.extents()));
        Ok(())
    }

    /// Current contents of one mapped block, from the buffer or the disk.
    fn block_contents(&self, file: u64, logical: u64, physical: u64) -> Vec<u8> {
        if self.cfg.delayed.enabled {
            if let Some(b) = self.delay.lock().get(file, logical) {
                return b.to_vec();
            }
        }
        self.disk.read_run(Run { start: physical, len: 1 })
    }

    /// Reads up to `len` bytes at `off`, stopping at end of file.
    pub fn read(&self, f: &mut FileData, off: u64, len: u64) -> Vec<u8> {
        if off >= f.size || len == 0 {
            return Vec::new();
        }
        let end = f.size.min(off.saturating_add(len));
        let out = if f.map.strategy == MapStrategy::Inline {
            let mut v = f.map.inline_data[off as usize..(end as usize).min(f.map.inline_data.len())].to_vec();
            v.resize((end - off) as usize, 0);
            v
        } else {
            self.read_blocks(f, off, end)
        };
        if self.cfg.timestamps {
            self.touch(f, OpKind::Read);
            self.commit(f);
        }
        out
    }

    fn read_blocks(&self, f: &FileData, off: u64, end: u64) -> Vec<u8> {
        let bs = self.disk.block_size() as u64;
        let (b0, b1) = (off / bs, end.div_ceil(bs));
        let mapping = f.map.map_read(b0, b1 - b0);
        self.disk.count_meta(mapping.meta_reads, mapping.meta_writes);
        let mut buf = vec![0u8; ((b1 - b0) * bs) as usize];
        let delay = self.cfg.delayed.enabled.then(|| self.delay.lock());
        for req in &mapping.requests {
            // Split the request around blocks still pending in the buffer.
            let mut i = 0;
            while i < req.len {
                let l = req.logical + i;
                let at = ((l - b0) * bs) as usize;
                if let Some(b) = delay.as_ref().and_then(|d| d.get(f.id, l)) {
                    buf[at..at + bs as usize].copy_from_slice(b);
                    i += 1;
                    continue;
                }
                let mut n = 1;
                while i + n < req.len && !delay.as_ref().is_some_and(|d| d.get(f.id, l + n).is_some()) {
                    n += 1;
                }
                let bytes = self.disk.read_run(Run { start: req.physical + i, len: n });
                buf[at..at + bytes.len()].copy_from_slice(&bytes);
                i += n;
            }
        }
        drop(delay);
        self.disk.classify(contiguity_classify(b0, b1 - b0, &f.map.extents()));
        let skip = (off - b0 * bs) as usize;
        buf[skip..skip + (end - off) as usize].to_vec()
    }

    /// Frees every block of `f`, drops its pending writes and reservations.
    pub fn release(&self, f: &mut FileData) {
        self.delay.lock().drop_file(f.id);
        for r in f.map.clear() {
            self.disk.free_run(r);
        }
        for r in self.pool.lock().release_owner(f.id) {
            self.disk.free_run(r);
        }
        f.size = 0;
        self.commit(f);
    }

    /// Flushes the delay buffer. Returns the number of blocks written.
    pub fn sync(&self) -> usize {
        self.delay.lock().flush(&self.disk)
    }

    /// Returns reserved but unused blocks to the disk.
    pub fn drain_pool(&self) {
        let mut p = self.pool.lock();
        let owners: std::collections::BTreeSet<u64> = p.runs().iter().map(|r| r.owner).collect();
        for o in owners {
            for r in p.release_owner(o) {
                self.disk.free_run(r);
            }
        }
    }
}
