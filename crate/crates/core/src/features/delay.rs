//! Global write-back buffer for delayed allocation.

use std::collections::BTreeMap;

use crate::blockdev::{Run, SimDisk};

/// (file, logical block) to (physical block, bytes).
type Pending = BTreeMap<(u64, u64), (u64, Box<[u8]>)>;

#[derive(Debug)]
pub struct DelayBuffer {
    limit: usize,
    pending: Pending,
    flushes: u64,
    absorbed: u64,
}

impl DelayBuffer {
    pub fn new(limit: usize) -> Self {
        DelayBuffer { limit: limit.max(1), pending: BTreeMap::new(), flushes: 0, absorbed: 0 }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn flush_count(&self) -> u64 {
        self.flushes
    }

    /// Writes that overwrote a block still pending and cost no disk I/O.
    pub fn absorbed_writes(&self) -> u64 {
        self.absorbed
    }

    pub fn get(&self, file: u64, logical: u64) -> Option<&[u8]> {
        self.pending.get(&(file, logical)).map(|(_, b)| &b[..])
    }

    /// Buffers one block. A new block that would exceed the limit flushes
    /// everything first.
    pub fn put(&mut self, disk: &SimDisk, file: u64, logical: u64, physical: u64, bytes: Box<[u8]>) {
        if let Some(slot) = self.pending.get_mut(&(file, logical)) {
            *slot = (physical, bytes);
            self.absorbed += 1;
            return;
        }
        if self.pending.len() >= self.limit {
            self.flush(disk);
        }
        self.pending.insert((file, logical), (physical, bytes));
    }

    /// Writes all pending blocks in (file, logical) order, one request per
    /// physically contiguous run. Returns the number of blocks written.
    pub fn flush(&mut self, disk: &SimDisk) -> usize {
        if self.pending.is_empty() {
            return 0;
        }
        let pending = std::mem::take(&mut self.pending);
        let n = pending.len();
        let mut run: Option<Run> = None;
        let mut bytes: Vec<u8> = Vec::new();
        for (_, (phys, data)) in pending {
            match run.as_mut() {
                Some(r) if r.end() == phys => r.len += 1,
                _ => {
                    if let Some(r) = run.take() {
                        disk.write_run(r, &bytes);
                        bytes.clear();
                    }
                    run = Some(Run { start: phys, len: 1 });
                }
            }
            bytes.extend_from_slice(&data);
        }
        if let Some(r) = run {
            disk.write_run(r, &bytes);
        }
        self.flushes += 1;
        n
    }

    pub fn drop_file(&mut self, file: u64) {
        self.pending.retain(|(f, _), _| *f != file);
    }
}
