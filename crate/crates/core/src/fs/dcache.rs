//! Hash-bucket dentry cache. Lookups run inside a shared read section over
//! the bucket, lock each candidate, re-check its parent and name, skip
//! unhashed entries and raise the reference count before leaving.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use super::monitor::{LockMonitor, Subject};

pub const DEFAULT_BUCKETS: usize = 64;

/// 32-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in bytes {
        h ^= *b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Qstr {
    pub hash: u32,
    pub len: u32,
    pub bytes: Vec<u8>,
}

impl Qstr {
    pub fn new(name: &str) -> Self {
        Qstr { hash: fnv1a(name.as_bytes()), len: name.len() as u32, bytes: name.as_bytes().to_vec() }
    }
}

#[derive(Debug)]
pub struct DentryFields {
    pub d_name: Qstr,
    pub d_parent: u64,
    pub unhashed: bool,
}

#[derive(Debug)]
pub struct DcacheEntry {
    pub id: u64,
    pub d_count: AtomicU64,
    pub d_lock: Mutex<DentryFields>,
}

impl DcacheEntry {
    pub fn count(&self) -> u64 {
        self.d_count.load(Ordering::SeqCst)
    }
}

type Probe = Arc<dyn Fn(&DcacheEntry) + Send + Sync>;

pub struct Dcache {
    buckets: Vec<RwLock<Vec<Arc<DcacheEntry>>>>,
    mon: Arc<LockMonitor>,
    next_id: AtomicU64,
    probe: Mutex<Option<Probe>>,
}

impl std::fmt::Debug for Dcache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dcache").field("buckets", &self.buckets.len()).finish_non_exhaustive()
    }
}

impl Dcache {
    pub fn new(buckets: usize, mon: Arc<LockMonitor>) -> Self {
        Dcache {
            buckets: (0..buckets.max(1)).map(|_| RwLock::new(Vec::new())).collect(),
            mon,
            next_id: AtomicU64::new(1),
            probe: Mutex::new(None),
        }
    }

    pub fn monitor(&self) -> &Arc<LockMonitor> {
        &self.mon
    }

    /// Bucket for a child of `parent` with name hash `hash`.
    pub fn d_hash(&self, parent: u64, hash: u32) -> usize {
        let mixed = (parent.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ hash as u64) as usize;
        mixed % self.buckets.len()
    }

    /// Called for each candidate after the bucket is read and before its
    /// lock is taken. Tests use it to pause a lookup at that point.
    pub fn set_probe(&self, probe: Option<Probe>) {
        *self.probe.lock() = probe;
    }

    /// Adds an entry to the bucket of (parent, name). Duplicates are allowed.
    pub fn d_add(&self, parent: u64, name: &str) -> Arc<DcacheEntry> {
        let q = Qstr::new(name);
        let b = self.d_hash(parent, q.hash);
        let e = Arc::new(DcacheEntry {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            d_count: AtomicU64::new(0),
            d_lock: Mutex::new(DentryFields { d_name: q, d_parent: parent, unhashed: false }),
        });
        self.buckets[b].write().push(e.clone());
        e
    }

    /// Marks an entry unhashed and unlinks it from its bucket.
    pub fn d_drop(&self, entry: &Arc<DcacheEntry>) {
        let b = {
            let mut f = entry.d_lock.lock();
            f.unhashed = true;
            self.d_hash(f.d_parent, f.d_name.hash)
        };
        self.buckets[b].write().retain(|e| !Arc::ptr_eq(e, entry));
    }

    /// Marks an entry unhashed but leaves it in its bucket, as a concurrent
    /// unlink does before the bucket is rewritten.
    pub fn d_mark_unhashed(&self, entry: &DcacheEntry) {
        entry.d_lock.lock().unhashed = true;
    }

    /// First half of a move: re-points the entry under its lock. It stays in
    /// its old bucket until [`Dcache::d_rehash`].
    pub fn d_set_parent(&self, entry: &DcacheEntry, parent: u64, name: &str) {
        let mut f = entry.d_lock.lock();
        f.d_parent = parent;
        f.d_name = Qstr::new(name);
    }

    /// Moves the entry to the bucket matching its current parent and name.
    pub fn d_rehash(&self, entry: &Arc<DcacheEntry>) {
        let target = {
            let f = entry.d_lock.lock();
            self.d_hash(f.d_parent, f.d_name.hash)
        };
        for (i, b) in self.buckets.iter().enumerate() {
            if i != target {
                b.write().retain(|e| !Arc::ptr_eq(e, entry));
            }
        }
        let mut t = self.buckets[target].write();
        if !t.iter().any(|e| Arc::ptr_eq(e, entry)) {
            t.push(entry.clone());
        }
    }

    pub fn d_move(&self, entry: &Arc<DcacheEntry>, parent: u64, name: &str) {
        self.d_set_parent(entry, parent, name);
        self.d_rehash(entry);
    }

    pub fn lookup(&self, parent: u64, name: &Qstr) -> Option<Arc<DcacheEntry>> {
        self.mon.op_boundary("dcache lookup entry");
        let b = self.d_hash(parent, name.hash);
        let probe = self.probe.lock().clone();
        let bucket = self.buckets[b].read();
        self.mon.acquire_shared(Subject::Bucket(b));
        let mut found = None;
        for entry in bucket.iter() {
            if let Some(p) = &probe {
                p(entry);
            }
            let fields = entry.d_lock.lock();
            self.mon.acquire(Subject::Dentry(entry.id));
            let hit = fields.d_parent == parent && fields.d_name == *name && !fields.unhashed;
            if hit {
                entry.d_count.fetch_add(1, Ordering::SeqCst);
            }
            self.mon.release(Subject::Dentry(entry.id));
            drop(fields);
            if hit {
                found = Some(entry.clone());
                break;
            }
        }
        self.mon.release_shared(Subject::Bucket(b));
        drop(bucket);
        self.mon.op_boundary("dcache lookup exit");
        found
    }
}
