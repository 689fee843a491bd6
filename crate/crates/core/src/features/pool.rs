//! Pre-allocation pool: reserved physical runs keyed by (owner, logical
//! start). The list variant scans linearly; the tree variant keeps runs
//! ordered and descends by comparison (binary search over the ordered
//! array, one visit per probe).

use serde::Serialize;

use super::config::PoolKind;
use crate::blockdev::Run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct PoolRun {
    pub owner: u64,
    pub logical: u64,
    pub physical: u64,
    pub len: u64,
}

impl PoolRun {
    fn contains(&self, owner: u64, logical: u64) -> bool {
        self.owner == owner && self.logical <= logical && logical < self.logical + self.len
    }

    pub fn run(&self) -> Run {
        Run { start: self.physical, len: self.len }
    }
}

#[derive(Debug, Clone)]
pub struct PreallocPool {
    kind: PoolKind,
    runs: Vec<PoolRun>,
    visits: u64,
}

impl PreallocPool {
    pub fn new(kind: PoolKind) -> Self {
        PreallocPool { kind, runs: Vec::new(), visits: 0 }
    }

    pub fn kind(&self) -> PoolKind {
        self.kind
    }

    pub fn visits(&self) -> u64 {
        self.visits
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn runs(&self) -> Vec<PoolRun> {
        let mut r = self.runs.clone();
        r.sort();
        r
    }

    pub fn reserved_blocks(&self) -> u64 {
        self.runs.iter().map(|r| r.len).sum()
    }

    fn overlaps(&self, owner: u64, logical: u64, len: u64) -> bool {
        self.runs.iter().any(|r| r.owner == owner && r.logical < logical + len && logical < r.logical + r.len)
    }

    fn insert(&mut self, run: PoolRun) {
        match self.kind {
            PoolKind::List => self.runs.push(run),
            PoolKind::Tree => {
                let key = (run.owner, run.logical);
                let at = self.runs.partition_point(|r| (r.owner, r.logical) < key);
                self.runs.insert(at, run);
            }
        }
    }

    /// Reserves `run` for `owner` starting at logical block `logical_hint`.
    /// Returns false (and keeps nothing) if that logical range already has
    /// a reservation.
    pub fn reserve(&mut self, owner: u64, logical_hint: u64, run: Run) -> bool {
        if run.len == 0 || self.overlaps(owner, logical_hint, run.len) {
            return false;
        }
        self.insert(PoolRun { owner, logical: logical_hint, physical: run.start, len: run.len });
        true
    }

    fn find(&mut self, owner: u64, logical: u64) -> Option<usize> {
        match self.kind {
            PoolKind::List => {
                for (i, r) in self.runs.iter().enumerate() {
                    self.visits += 1;
                    if r.contains(owner, logical) {
                        return Some(i);
                    }
                }
                None
            }
            PoolKind::Tree => {
                let key = (owner, logical);
                let (mut lo, mut hi) = (0, self.runs.len());
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    self.visits += 1;
                    if (self.runs[mid].owner, self.runs[mid].logical) <= key {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
                (lo > 0 && self.runs[lo - 1].contains(owner, logical)).then(|| lo - 1)
            }
        }
    }

    /// Takes up to `max_len` reserved blocks starting at `logical`. The
    /// remainder of the run stays reserved.
    pub fn take(&mut self, owner: u64, logical: u64, max_len: u64) -> Option<PoolRun> {
        if max_len == 0 {
            return None;
        }
        let i = self.find(owner, logical)?;
        let r = self.runs.remove(i);
        let skip = logical - r.logical;
        let len = max_len.min(r.len - skip);
        let taken = PoolRun { owner, logical, physical: r.physical + skip, len };
        if skip > 0 {
            self.insert(PoolRun { len: skip, ..r });
        }
        let rest = r.len - skip - len;
        if rest > 0 {
            self.insert(PoolRun { owner, logical: logical + len, physical: taken.physical + len, len: rest });
        }
        Some(taken)
    }

    /// Drops every reservation of `owner`, returning the physical runs.
    pub fn release_owner(&mut self, owner: u64) -> Vec<Run> {
        let (gone, keep): (Vec<_>, Vec<_>) = self.runs.drain(..).partition(|r| r.owner == owner);
        self.runs = keep;
        gone.into_iter().map(|r| r.run()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_run_one_visit() {
        for kind in [PoolKind::List, PoolKind::Tree] {
            let mut p = PreallocPool::new(kind);
            assert!(p.take(1, 0, 1).is_none());
            assert_eq!(p.visits(), 0);
            p.reserve(1, 10, Run { start: 100, len: 4 });
            let t = p.take(1, 10, 4).unwrap();
            assert_eq!((t.physical, t.len), (100, 4));
            assert_eq!(p.visits(), 1);
        }
    }

    #[test]
    fn split_leaves_remainder() {
        let mut p = PreallocPool::new(PoolKind::Tree);
        p.reserve(7, 0, Run { start: 200, len: 16 });
        let t = p.take(7, 0, 8).unwrap();
        assert_eq!((t.physical, t.len), (200, 8));
        assert_eq!(p.runs(), vec![PoolRun { owner: 7, logical: 8, physical: 208, len: 8 }]);
        let mid = p.take(7, 10, 2).unwrap();
        assert_eq!(mid.physical, 210);
        assert_eq!(p.reserved_blocks(), 6);
    }

    #[test]
    fn overlapping_reservation_refused() {
        let mut p = PreallocPool::new(PoolKind::List);
        assert!(p.reserve(1, 0, Run { start: 0, len: 4 }));
        assert!(!p.reserve(1, 2, Run { start: 10, len: 4 }));
        assert!(p.reserve(2, 2, Run { start: 10, len: 4 }));
        assert_eq!(p.release_owner(1), vec![Run { start: 0, len: 4 }]);
    }
}
