//! Sorted, non-overlapping extent lists.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Extent {
    pub logical: u64,
    pub physical: u64,
    pub len: u64,
}

impl Extent {
    pub fn logical_end(&self) -> u64 {
        self.logical + self.len
    }

    fn joins(&self, next: &Extent) -> bool {
        self.logical_end() == next.logical && self.physical + self.len == next.physical
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtentList {
    extents: Vec<Extent>,
}

impl ExtentList {
    pub fn as_slice(&self) -> &[Extent] {
        &self.extents
    }

    pub fn is_empty(&self) -> bool {
        self.extents.is_empty()
    }

    /// Index of the first extent ending after `logical`.
    fn first_after(&self, logical: u64) -> usize {
        self.extents.partition_point(|e| e.logical_end() <= logical)
    }

    pub fn lookup(&self, logical: u64) -> Option<u64> {
        let i = self.first_after(logical);
        self.extents.get(i).filter(|e| e.logical <= logical).map(|e| e.physical + (logical - e.logical))
    }

    /// Mapped pieces of `[start, start+len)` in logical order, as
    /// `(extent index, piece)`.
    pub fn fragments(&self, start: u64, len: u64) -> Vec<(usize, Extent)> {
        let end = start + len;
        let mut out = Vec::new();
        let mut i = self.first_after(start);
        while let Some(e) = self.extents.get(i) {
            if e.logical >= end {
                break;
            }
            let lo = e.logical.max(start);
            let hi = e.logical_end().min(end);
            out.push((i, Extent { logical: lo, physical: e.physical + (lo - e.logical), len: hi - lo }));
            i += 1;
        }
        out
    }

    /// Unmapped holes of `[start, start+len)` as `(logical, len)`.
    pub fn holes(&self, start: u64, len: u64) -> Vec<(u64, u64)> {
        let end = start + len;
        let mut out = Vec::new();
        let mut cur = start;
        for (_, f) in self.fragments(start, len) {
            if f.logical > cur {
                out.push((cur, f.logical - cur));
            }
            cur = f.logical_end();
        }
        if cur < end {
            out.push((cur, end - cur));
        }
        out
    }

    /// Inserts an extent over an unmapped range, merging with physically
    /// contiguous neighbours. Returns the number of records written.
    pub fn insert(&mut self, e: Extent) -> u64 {
        assert!(e.len > 0);
        debug_assert!(self.fragments(e.logical, e.len).is_empty(), "range already mapped");
        let i = self.first_after(e.logical);
        let merge_prev = i > 0 && self.extents[i - 1].joins(&e);
        let merge_next = self.extents.get(i).is_some_and(|n| e.joins(n));
        match (merge_prev, merge_next) {
            (true, true) => {
                let next = self.extents.remove(i);
                self.extents[i - 1].len += e.len + next.len;
                2
            }
            (true, false) => {
                self.extents[i - 1].len += e.len;
                1
            }
            (false, true) => {
                let n = &mut self.extents[i];
                n.logical = e.logical;
                n.physical = e.physical;
                n.len += e.len;
                1
            }
            (false, false) => {
                self.extents.insert(i, e);
                1
            }
        }
    }

    pub fn clear(&mut self) -> Vec<Extent> {
        std::mem::take(&mut self.extents)
    }
}

/// A request is sequential when one extent covers its whole logical range.
/// Zero-length requests are sequential.
pub fn contiguity_classify(logical: u64, len: u64, extents: &[Extent]) -> bool {
    len == 0 || extents.iter().any(|e| e.logical <= logical && logical + len <= e.logical_end())
}
