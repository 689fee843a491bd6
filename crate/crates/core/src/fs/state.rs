//! In-memory tree of inodes with per-inode exclusive locks and lock-coupling
//! traversal.

use std::collections::BTreeMap;
use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{ArcMutexGuard, Mutex, RawMutex};
use serde::{Deserialize, Serialize};

use super::monitor::{LockMonitor, Subject};
use crate::blockdev::SimDisk;
use crate::features::{Clock, FeatureConfig, FeatureError, FileData, Storage};

pub const ROOT_INUM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InodeKind {
    Dir,
    File,
}

#[derive(Debug, Default)]
pub struct InodeState {
    pub entries: BTreeMap<String, Arc<Inode>>,
    pub file: Option<FileData>,
}

#[derive(Debug)]
pub struct Inode {
    pub id: u64,
    pub kind: InodeKind,
    state: Arc<Mutex<InodeState>>,
}

/// Observes scheduling points; used to drive controlled interleavings.
pub trait SchedHook: Send + Sync {
    fn op_start(&self);
    fn before_acquire(&self, subject: Subject);
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FsError {
    #[error("no such file")]
    NotFound,
    #[error("not a regular file")]
    NotAFile,
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// A held inode lock. Dropping it releases the lock and tells the monitor.
pub struct InodeGuard<'a> {
    fs: &'a FsState,
    inode: Arc<Inode>,
    guard: ArcMutexGuard<RawMutex, InodeState>,
}

impl InodeGuard<'_> {
    pub fn inode(&self) -> &Arc<Inode> {
        &self.inode
    }

    pub fn id(&self) -> u64 {
        self.inode.id
    }

    pub fn kind(&self) -> InodeKind {
        self.inode.kind
    }

    /// Records a modification of this inode with the monitor.
    pub fn mark_mutated(&self) {
        self.fs.mon.mutate(Subject::Inode(self.inode.id));
    }
}

impl Deref for InodeGuard<'_> {
    type Target = InodeState;
    fn deref(&self) -> &InodeState {
        &self.guard
    }
}

impl DerefMut for InodeGuard<'_> {
    fn deref_mut(&mut self) -> &mut InodeState {
        &mut self.guard
    }
}

impl Drop for InodeGuard<'_> {
    fn drop(&mut self) {
        self.fs.mon.release(Subject::Inode(self.inode.id));
    }
}

/// Path-keyed view of the whole tree, for oracles.
pub type TreeSnapshot = BTreeMap<String, SnapshotNode>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SnapshotNode {
    Dir,
    File(Vec<u8>),
}

pub struct FsState {
    root: Arc<Inode>,
    mon: Arc<LockMonitor>,
    storage: Storage,
    next_id: AtomicU64,
    hook: Option<Arc<dyn SchedHook>>,
}

impl std::fmt::Debug for FsState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FsState").field("root", &self.root.id).field("storage", &self.storage).finish_non_exhaustive()
    }
}

pub fn valid_name(name: &str) -> bool {
    !name.is_empty() && name != "." && name != ".." && !name.contains('/')
}

/// Splits `/a/b` into `["a", "b"]`; `/` is the empty path.
pub fn split_path(path: &str) -> Vec<String> {
    path.split('/').filter(|s| !s.is_empty()).map(str::to_string).collect()
}

impl Default for FsState {
    fn default() -> Self {
        FsState::new(FeatureConfig::default())
    }
}

impl FsState {
    pub fn new(cfg: FeatureConfig) -> Self {
        FsState::with_storage(Storage::new(Arc::new(SimDisk::default()), cfg), Arc::new(LockMonitor::default()))
    }

    pub fn with_disk(disk: Arc<SimDisk>, cfg: FeatureConfig) -> Self {
        FsState::with_storage(Storage::new(disk, cfg), Arc::new(LockMonitor::default()))
    }

    pub fn with_clock(disk: Arc<SimDisk>, cfg: FeatureConfig, clock: Arc<dyn Clock>) -> Self {
        FsState::with_storage(Storage::with_clock(disk, cfg, clock), Arc::new(LockMonitor::default()))
    }

    pub fn with_storage(storage: Storage, mon: Arc<LockMonitor>) -> Self {
        let root = Arc::new(Inode { id: ROOT_INUM, kind: InodeKind::Dir, state: Arc::default() });
        FsState { root, mon, storage, next_id: AtomicU64::new(ROOT_INUM + 1), hook: None }
    }

    pub fn with_hook(mut self, hook: Arc<dyn SchedHook>) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn monitor(&self) -> &Arc<LockMonitor> {
        &self.mon
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn root(&self) -> &Arc<Inode> {
        &self.root
    }

    pub fn lock(&self, inode: &Arc<Inode>) -> InodeGuard<'_> {
        if let Some(h) = &self.hook {
            h.before_acquire(Subject::Inode(inode.id));
        }
        let guard = inode.state.lock_arc();
        self.mon.acquire(Subject::Inode(inode.id));
        InodeGuard { fs: self, inode: inode.clone(), guard }
    }

    fn begin(&self) {
        if let Some(h) = &self.hook {
            h.op_start();
        }
        self.mon.op_boundary("operation entry");
    }

    fn end(&self) {
        self.mon.op_boundary("operation exit");
    }

    /// Walks `path` from `cur` by lock coupling. Returns the target holding
    /// only its lock, or `None` holding nothing.
    pub fn locate<'a>(&'a self, cur: InodeGuard<'a>, path: &[&str]) -> Option<InodeGuard<'a>> {
        self.couple(cur, path, 0)
    }

    /// Lock coupling with `pinned` other inode locks held throughout.
    fn couple<'a>(&'a self, mut cur: InodeGuard<'a>, path: &[&str], pinned: usize) -> Option<InodeGuard<'a>> {
        for name in path {
            if cur.kind() != InodeKind::Dir {
                return None;
            }
            let child = cur.entries.get(*name)?.clone();
            let next = self.lock(&child);
            self.mon.check_coupling(pinned);
            cur = next;
        }
        Some(cur)
    }

    /// Descends from a held directory without releasing it.
    fn descend<'a>(&'a self, from: &InodeGuard<'a>, path: &[&str], pinned: usize) -> Option<InodeGuard<'a>> {
        let (first, rest) = path.split_first()?;
        if from.kind() != InodeKind::Dir {
            return None;
        }
        let child = from.entries.get(*first)?.clone();
        let g = self.lock(&child);
        self.mon.check_coupling(pinned);
        self.couple(g, rest, pinned)
    }

    /// Inode number at `path`, found by a coupled walk that releases
    /// everything before returning.
    pub fn resolve(&self, path: &[&str]) -> Option<u64> {
        self.locate(self.lock(&self.root), path).map(|g| g.id())
    }

    /// 0 when `name` may be inserted (dir stays locked), 1 otherwise (dir
    /// released).
    #[allow(clippy::result_unit_err)]
    pub fn check_ins<'a>(&'a self, dir: InodeGuard<'a>, name: &str) -> Result<InodeGuard<'a>, ()> {
        if dir.kind() != InodeKind::Dir || dir.entries.contains_key(name) {
            return Err(());
        }
        Ok(dir)
    }

    pub fn ins(&self, path: &[&str], name: &str, kind: InodeKind) -> i32 {
        self.begin();
        let r = self.ins_inner(path, name, kind);
        self.end();
        r
    }

    fn ins_inner(&self, path: &[&str], name: &str, kind: InodeKind) -> i32 {
        if !valid_name(name) {
            return -1;
        }
        let Some(cur) = self.locate(self.lock(&self.root), path) else { return -1 };
        let Ok(mut dir) = self.check_ins(cur, name) else { return -1 };
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let state =
            InodeState { entries: BTreeMap::new(), file: (kind == InodeKind::File).then(|| self.storage.new_file(id)) };
        dir.entries.insert(name.to_string(), Arc::new(Inode { id, kind, state: Arc::new(Mutex::new(state)) }));
        dir.mark_mutated();
        0
    }

    pub fn remove(&self, path: &[&str], name: &str) -> i32 {
        self.begin();
        let r = self.remove_inner(path, name);
        self.end();
        r
    }

    fn remove_inner(&self, path: &[&str], name: &str) -> i32 {
        let Some(mut dir) = self.locate(self.lock(&self.root), path) else { return -1 };
        let Some(child) = dir.entries.get(name).cloned() else { return -1 };
        let mut c = self.lock(&child);
        if !c.entries.is_empty() {
            return -1;
        }
        if let Some(f) = c.file.as_mut() {
            self.storage.release(f);
            c.mark_mutated();
        }
        drop(c);
        dir.entries.remove(name);
        dir.mark_mutated();
        0
    }

    pub fn rename(&self, src: &[&str], src_name: &str, dst: &[&str], dst_name: &str) -> i32 {
        self.begin();
        let r = self.rename_inner(src, src_name, dst, dst_name);
        self.end();
        r
    }

    fn rename_inner(&self, src: &[&str], sn: &str, dst: &[&str], dn: &str) -> i32 {
        if !valid_name(dn) {
            return -1;
        }
        // Moving an entry into itself or below it.
        if dst.len() > src.len() && dst[..src.len()] == *src && dst[src.len()] == sn {
            return -1;
        }
        // Phase 1: the common path, ending with only the common ancestor held.
        let k = src.iter().zip(dst).take_while(|(a, b)| a == b).count();
        let Some(mut common) = self.locate(self.lock(&self.root), &src[..k]) else { return -1 };
        // Phase 2: the remaining paths, keeping the common ancestor.
        let mut sdir = None;
        if k < src.len() {
            match self.descend(&common, &src[k..], 1) {
                Some(g) => sdir = Some(g),
                None => return -1,
            }
        }
        let mut ddir = None;
        if k < dst.len() {
            match self.descend(&common, &dst[k..], 1 + sdir.is_some() as usize) {
                Some(g) => ddir = Some(g),
                None => return -1,
            }
        }
        // Phase 3: checks and the move.
        let ok = match (sdir.as_mut(), ddir.as_mut()) {
            (None, None) => move_within(&mut common, sn, dn),
            (Some(s), None) => move_between(s, &mut common, sn, dn),
            (None, Some(d)) => move_between(&mut common, d, sn, dn),
            (Some(s), Some(d)) => move_between(s, d, sn, dn),
        };
        if ok {
            0
        } else {
            -1
        }
    }

    pub fn write(&self, path: &[&str], off: u64, data: &[u8]) -> i32 {
        match self.try_write(path, off, data) {
            Ok(_) => 0,
            Err(_) => -1,
        }
    }

    pub fn try_write(&self, path: &[&str], off: u64, data: &[u8]) -> Result<usize, FsError> {
        self.begin();
        let r = (|| {
            let mut g = self.locate(self.lock(&self.root), path).ok_or(FsError::NotFound)?;
            let f = g.file.as_mut().ok_or(FsError::NotAFile)?;
            let n = self.storage.write(f, off, data)?;
            g.mark_mutated();
            Ok(n)
        })();
        self.end();
        r
    }

    /// Bytes in `[off, off + len)` up to end of file; holes read as zeros.
    pub fn read(&self, path: &[&str], off: u64, len: u64) -> Option<Vec<u8>> {
        self.begin();
        let r = (|| {
            let mut g = self.locate(self.lock(&self.root), path)?;
            let f = g.file.as_mut()?;
            let out = self.storage.read(f, off, len);
            if self.storage.config().timestamps || self.storage.config().checksums {
                g.mark_mutated();
            }
            Some(out)
        })();
        self.end();
        r
    }

    /// Runs `f` on a file's data under its lock.
    pub fn with_file<R>(&self, path: &[&str], f: impl FnOnce(&Storage, &mut FileData) -> R) -> Option<R> {
        let mut g = self.locate(self.lock(&self.root), path)?;
        let data = g.file.as_mut()?;
        Some(f(&self.storage, data))
    }

    pub fn sync(&self) -> usize {
        self.storage.sync()
    }

    /// Walks the whole tree and returns every path. Call when quiescent.
    pub fn snapshot(&self) -> TreeSnapshot {
        let mut out = TreeSnapshot::new();
        out.insert("/".into(), SnapshotNode::Dir);
        let mut stack = vec![(String::new(), self.root.clone())];
        while let Some((prefix, inode)) = stack.pop() {
            let mut g = self.lock(&inode);
            let children: Vec<_> = g.entries.iter().map(|(n, c)| (n.clone(), c.clone())).collect();
            if let Some(f) = g.file.as_mut() {
                let bytes = self.storage.read(f, 0, f.size);
                out.insert(prefix.clone(), SnapshotNode::File(bytes));
            }
            drop(g);
            for (n, c) in children {
                let p = format!("{prefix}/{n}");
                if c.kind == InodeKind::Dir {
                    out.insert(p.clone(), SnapshotNode::Dir);
                }
                stack.push((p, c));
            }
        }
        out
    }

    /// Checks that the inode graph is a tree rooted at the root directory:
    /// every inode reached once, directories only as interior nodes.
    pub fn check_tree(&self) -> Result<usize, String> {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.root.clone()];
        if self.root.kind != InodeKind::Dir || self.root.id != ROOT_INUM {
            return Err("root is not the root directory".into());
        }
        while let Some(inode) = stack.pop() {
            if !seen.insert(inode.id) {
                return Err(format!("inode {} reachable twice", inode.id));
            }
            let g = self.lock(&inode);
            if inode.kind == InodeKind::File && !g.entries.is_empty() {
                return Err(format!("file inode {} has entries", inode.id));
            }
            if (inode.kind == InodeKind::File) != g.file.is_some() {
                return Err(format!("inode {} kind and data disagree", inode.id));
            }
            stack.extend(g.entries.values().cloned());
        }
        Ok(seen.len())
    }
}

fn move_within(dir: &mut InodeGuard<'_>, sn: &str, dn: &str) -> bool {
    if dir.kind() != InodeKind::Dir || !dir.entries.contains_key(sn) {
        return false;
    }
    if sn == dn {
        return true;
    }
    if dir.entries.contains_key(dn) {
        return false;
    }
    let node = dir.entries.remove(sn).expect("checked above");
    dir.entries.insert(dn.to_string(), node);
    dir.mark_mutated();
    true
}

fn move_between(s: &mut InodeGuard<'_>, d: &mut InodeGuard<'_>, sn: &str, dn: &str) -> bool {
    if s.kind() != InodeKind::Dir || d.kind() != InodeKind::Dir {
        return false;
    }
    if !s.entries.contains_key(sn) || d.entries.contains_key(dn) {
        return false;
    }
    let node = s.entries.remove(sn).expect("checked above");
    d.entries.insert(dn.to_string(), node);
    s.mark_mutated();
    d.mark_mutated();
    true
}
