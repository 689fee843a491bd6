//! Nanosecond inode timestamps.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub trait Clock: Send + Sync + std::fmt::Debug {
    /// Nanoseconds since the Unix epoch; never decreases.
    fn now_ns(&self) -> u64;
}

/// Wall-clock origin advanced by a monotonic timer.
#[derive(Debug)]
pub struct MonotonicClock {
    origin_ns: u64,
    start: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        let origin_ns = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0);
        MonotonicClock { origin_ns, start: Instant::now() }
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        self.origin_ns + self.start.elapsed().as_nanos() as u64
    }
}

#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(ns: u64) -> Self {
        ManualClock(AtomicU64::new(ns))
    }

    pub fn advance(&self, ns: u64) {
        self.0.fetch_add(ns, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ns(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Read,
    Data,
    Meta,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub atime: u64,
    pub mtime: u64,
    pub ctime: u64,
}

impl Timestamps {
    pub fn touch(&mut self, op: OpKind, clock: &dyn Clock) {
        let now = clock.now_ns();
        match op {
            OpKind::Read => self.atime = self.atime.max(now),
            OpKind::Data => {
                self.mtime = self.mtime.max(now);
                self.ctime = self.ctime.max(now);
            }
            OpKind::Meta => self.ctime = self.ctime.max(now),
        }
    }
}
