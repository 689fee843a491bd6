//! Sparse simulated block device with a first-fit free map and I/O counters.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BLOCK_SIZE: usize = 4096;
/// 256 MiB of 4 KiB blocks.
pub const DEFAULT_BLOCKS: u64 = 65536;

/// A run of physically contiguous blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Run {
    pub start: u64,
    pub len: u64,
}

impl Run {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }
}

#[derive(Debug, Default)]
struct Counters {
    data_reads: AtomicU64,
    data_writes: AtomicU64,
    meta_reads: AtomicU64,
    meta_writes: AtomicU64,
    io_ops: AtomicU64,
    uncontiguous_ops: AtomicU64,
    classified_ops: AtomicU64,
    data_blocks_read: AtomicU64,
    data_blocks_written: AtomicU64,
}

/// Point-in-time copy of the device counters. `data_reads`/`data_writes`
/// count requests; a request may span many blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub data_reads: u64,
    pub data_writes: u64,
    pub meta_reads: u64,
    pub meta_writes: u64,
    pub io_ops: u64,
    pub uncontiguous_ops: u64,
    pub classified_ops: u64,
    pub data_blocks_read: u64,
    pub data_blocks_written: u64,
}

impl CounterSnapshot {
    pub fn delta(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            data_reads: self.data_reads - earlier.data_reads,
            data_writes: self.data_writes - earlier.data_writes,
            meta_reads: self.meta_reads - earlier.meta_reads,
            meta_writes: self.meta_writes - earlier.meta_writes,
            io_ops: self.io_ops - earlier.io_ops,
            uncontiguous_ops: self.uncontiguous_ops - earlier.uncontiguous_ops,
            classified_ops: self.classified_ops - earlier.classified_ops,
            data_blocks_read: self.data_blocks_read - earlier.data_blocks_read,
            data_blocks_written: self.data_blocks_written - earlier.data_blocks_written,
        }
    }
}

#[derive(Debug)]
struct FreeMap {
    words: Vec<u64>,
    nblocks: u64,
    used: u64,
}

impl FreeMap {
    fn is_used(&self, b: u64) -> bool {
        self.words[(b / 64) as usize] >> (b % 64) & 1 == 1
    }

    fn set(&mut self, b: u64, used: bool) {
        let w = &mut self.words[(b / 64) as usize];
        let bit = 1u64 << (b % 64);
        if used {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    fn first_free(&self) -> Option<u64> {
        for (i, w) in self.words.iter().enumerate() {
            if *w != u64::MAX {
                let b = i as u64 * 64 + (!*w).trailing_zeros() as u64;
                return (b < self.nblocks).then_some(b);
            }
        }
        None
    }
}

#[derive(Debug)]
pub struct SimDisk {
    block_size: usize,
    nblocks: u64,
    data: Mutex<HashMap<u64, Box<[u8]>>>,
    free: Mutex<FreeMap>,
    counters: Counters,
}

impl Default for SimDisk {
    fn default() -> Self {
        SimDisk::new(DEFAULT_BLOCKS, DEFAULT_BLOCK_SIZE)
    }
}

impl SimDisk {
    pub fn new(nblocks: u64, block_size: usize) -> Self {
        assert!(block_size > 0 && nblocks > 0);
        SimDisk {
            block_size,
            nblocks,
            data: Mutex::new(HashMap::new()),
            free: Mutex::new(FreeMap { words: vec![0; nblocks.div_ceil(64) as usize], nblocks, used: 0 }),
            counters: Counters::default(),
        }
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn nblocks(&self) -> u64 {
        self.nblocks
    }

    pub fn allocated_blocks(&self) -> u64 {
        self.free.lock().used
    }

    pub fn is_allocated(&self, b: u64) -> bool {
        b < self.nblocks && self.free.lock().is_used(b)
    }

    /// First-fit: the run starts at the lowest free block and extends while
    /// blocks stay free, up to `max_len`. May be shorter than asked.
    pub fn alloc_run(&self, max_len: u64) -> Option<Run> {
        if max_len == 0 {
            return None;
        }
        let mut f = self.free.lock();
        let start = f.first_free()?;
        let mut len = 0;
        while len < max_len && start + len < self.nblocks && !f.is_used(start + len) {
            f.set(start + len, true);
            len += 1;
        }
        f.used += len;
        Some(Run { start, len })
    }

    /// Claims up to `max_len` free blocks beginning exactly at `start`.
    pub fn alloc_at(&self, start: u64, max_len: u64) -> Option<Run> {
        let mut f = self.free.lock();
        let mut len = 0;
        while len < max_len && start + len < self.nblocks && !f.is_used(start + len) {
            f.set(start + len, true);
            len += 1;
        }
        f.used += len;
        (len > 0).then_some(Run { start, len })
    }

    pub fn free_run(&self, run: Run) {
        let mut f = self.free.lock();
        let mut data = self.data.lock();
        for b in run.start..run.end() {
            if f.is_used(b) {
                f.set(b, false);
                f.used -= 1;
            }
            data.remove(&b);
        }
    }

    /// One data read request over `run`; unwritten blocks read as zeros.
    pub fn read_run(&self, run: Run) -> Vec<u8> {
        let bs = self.block_size;
        let mut out = vec![0u8; run.len as usize * bs];
        let data = self.data.lock();
        for (i, b) in (run.start..run.end()).enumerate() {
            if let Some(block) = data.get(&b) {
                out[i * bs..(i + 1) * bs].copy_from_slice(block);
            }
        }
        self.counters.data_reads.fetch_add(1, Ordering::Relaxed);
        self.counters.data_blocks_read.fetch_add(run.len, Ordering::Relaxed);
        self.counters.io_ops.fetch_add(1, Ordering::Relaxed);
        out
    }

    /// One data write request; `bytes` must be `run.len` whole blocks.
    pub fn write_run(&self, run: Run, bytes: &[u8]) {
        let bs = self.block_size;
        assert_eq!(bytes.len(), run.len as usize * bs, "write_run needs whole blocks");
        let mut data = self.data.lock();
        for (i, b) in (run.start..run.end()).enumerate() {
            data.insert(b, bytes[i * bs..(i + 1) * bs].into());
        }
        self.counters.data_writes.fetch_add(1, Ordering::Relaxed);
        self.counters.data_blocks_written.fetch_add(run.len, Ordering::Relaxed);
        self.counters.io_ops.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_meta(&self, reads: u64, writes: u64) {
        self.counters.meta_reads.fetch_add(reads, Ordering::Relaxed);
        self.counters.meta_writes.fetch_add(writes, Ordering::Relaxed);
        self.counters.io_ops.fetch_add(reads + writes, Ordering::Relaxed);
    }

    pub fn classify(&self, sequential: bool) {
        self.counters.classified_ops.fetch_add(1, Ordering::Relaxed);
        if !sequential {
            self.counters.uncontiguous_ops.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn counters(&self) -> CounterSnapshot {
        let c = &self.counters;
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CounterSnapshot {
            data_reads: l(&c.data_reads),
            data_writes: l(&c.data_writes),
            meta_reads: l(&c.meta_reads),
            meta_writes: l(&c.meta_writes),
            io_ops: l(&c.io_ops),
            uncontiguous_ops: l(&c.uncontiguous_ops),
            classified_ops: l(&c.classified_ops),
            data_blocks_read: l(&c.data_blocks_read),
            data_blocks_written: l(&c.data_blocks_written),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_fit_skips_holes_that_are_too_short() {
        let d = SimDisk::new(128, 16);
        let a = d.alloc_run(4).unwrap();
        let b = d.alloc_run(4).unwrap();
        assert_eq!((a.start, b.start), (0, 4));
        d.free_run(Run { start: 1, len: 2 });
        assert_eq!(d.alloc_run(8).unwrap(), Run { start: 1, len: 2 });
        assert_eq!(d.allocated_blocks(), 8);
    }

    #[test]
    fn unwritten_reads_zero_and_counts() {
        let d = SimDisk::new(8, 4);
        d.write_run(Run { start: 2, len: 1 }, &[1, 2, 3, 4]);
        assert_eq!(d.read_run(Run { start: 1, len: 2 }), vec![0, 0, 0, 0, 1, 2, 3, 4]);
        let c = d.counters();
        assert_eq!((c.data_reads, c.data_writes, c.io_ops), (1, 1, 2));
    }

    #[test]
    fn full_disk() {
        let d = SimDisk::new(3, 4);
        assert_eq!(d.alloc_run(5).unwrap().len, 3);
        assert!(d.alloc_run(1).is_none());
    }
}
