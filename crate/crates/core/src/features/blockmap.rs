//! Per-file logical-to-physical mapping behind one interface, whichever
//! strategy backs it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::BlockMapKind;
use super::extent::{Extent, ExtentList};
use super::indirect::{IndirectMap, MAX_BLOCKS};
use super::FeatureError;
use crate::blockdev::Run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapStrategy {
    Indirect,
    Extent,
    Inline,
}

impl From<BlockMapKind> for MapStrategy {
    fn from(k: BlockMapKind) -> Self {
        match k {
            BlockMapKind::Indirect => MapStrategy::Indirect,
            BlockMapKind::Extent => MapStrategy::Extent,
        }
    }
}

/// One physically contiguous data request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IoRequest {
    pub logical: u64,
    pub physical: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mapping {
    pub requests: Vec<IoRequest>,
    pub meta_reads: u64,
    pub meta_writes: u64,
}

/// Where new blocks come from.
pub trait BlockSource {
    /// Physical runs for logical blocks `[logical, logical + len)`, in
    /// logical order, totalling exactly `len`.
    fn data_blocks(&mut self, logical: u64, len: u64) -> Result<Vec<Run>, FeatureError>;
    /// One block for an index node.
    fn index_block(&mut self) -> Result<u64, FeatureError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockMapHandle {
    pub strategy: MapStrategy,
    indirect: IndirectMap,
    extents: ExtentList,
    pub inline_data: Vec<u8>,
}

impl BlockMapHandle {
    pub fn new(strategy: MapStrategy) -> Self {
        BlockMapHandle {
            strategy,
            indirect: IndirectMap::default(),
            extents: ExtentList::default(),
            inline_data: Vec::new(),
        }
    }

    /// Physical block of `logical`, without charging metadata.
    pub fn lookup(&self, logical: u64) -> Option<u64> {
        match self.strategy {
            MapStrategy::Indirect => self.indirect.lookup(logical, &mut BTreeSet::new()),
            MapStrategy::Extent => self.extents.lookup(logical),
            MapStrategy::Inline => None,
        }
    }

    /// The mapping as maximal contiguous extents. For the indirect map these
    /// are runs of consecutive pointers.
    pub fn extents(&self) -> Vec<Extent> {
        match self.strategy {
            MapStrategy::Extent => self.extents.as_slice().to_vec(),
            MapStrategy::Inline => Vec::new(),
            MapStrategy::Indirect => {
                let mut out: Vec<Extent> = Vec::new();
                for (l, p) in self.indirect.pairs() {
                    match out.last_mut() {
                        Some(e) if e.logical_end() == l && e.physical + e.len == p => e.len += 1,
                        _ => out.push(Extent { logical: l, physical: p, len: 1 }),
                    }
                }
                out
            }
        }
    }

    pub fn extent_records(&self) -> usize {
        self.extents.as_slice().len()
    }

    /// Blocks used by index nodes.
    pub fn index_blocks(&self) -> Vec<u64> {
        match self.strategy {
            MapStrategy::Indirect => self.indirect.index_blocks(),
            _ => Vec::new(),
        }
    }

    pub fn map_read(&self, start: u64, len: u64) -> Mapping {
        let mut m = Mapping::default();
        match self.strategy {
            MapStrategy::Inline => {}
            MapStrategy::Extent => {
                for (_, e) in self.extents.fragments(start, len) {
                    m.requests.push(IoRequest { logical: e.logical, physical: e.physical, len: e.len });
                    m.meta_reads += 1;
                }
            }
            MapStrategy::Indirect => {
                let mut touched = BTreeSet::new();
                for l in start..start + len {
                    if let Some(p) = self.indirect.lookup(l, &mut touched) {
                        m.requests.push(IoRequest { logical: l, physical: p, len: 1 });
                    }
                }
                m.meta_reads = touched.len() as u64;
            }
        }
        m
    }

    /// Maps `[start, start + len)`, allocating holes from `src`, and returns
    /// the requests covering the whole range.
    pub fn map_write(&mut self, start: u64, len: u64, src: &mut dyn BlockSource) -> Result<Mapping, FeatureError> {
        let mut m = Mapping::default();
        match self.strategy {
            MapStrategy::Inline => {}
            MapStrategy::Extent => {
                m.meta_reads = self.extents.fragments(start, len).len() as u64;
                m.meta_writes = extent_allocate(&mut self.extents, start, len, src)?.1;
                for (_, e) in self.extents.fragments(start, len) {
                    m.requests.push(IoRequest { logical: e.logical, physical: e.physical, len: e.len });
                }
            }
            MapStrategy::Indirect => {
                if start + len > MAX_BLOCKS {
                    return Err(FeatureError::RangeError(format!("block {} beyond the indirect map", start + len - 1)));
                }
                let mut touched = BTreeSet::new();
                let mut written = BTreeSet::new();
                let mut hole: Option<(u64, u64)> = None;
                let mut holes = Vec::new();
                for l in start..start + len {
                    if self.indirect.lookup(l, &mut touched).is_none() {
                        match hole.as_mut() {
                            Some((_, n)) => *n += 1,
                            None => hole = Some((l, 1)),
                        }
                    } else if let Some(h) = hole.take() {
                        holes.push(h);
                    }
                }
                holes.extend(hole);
                for (l0, n) in holes {
                    let mut l = l0;
                    for run in src.data_blocks(l0, n)? {
                        for p in run.start..run.end() {
                            self.indirect.set(l, p, &mut written, &mut || src.index_block())?;
                            l += 1;
                        }
                    }
                }
                for l in start..start + len {
                    let p = self.indirect.lookup(l, &mut BTreeSet::new()).expect("mapped above");
                    m.requests.push(IoRequest { logical: l, physical: p, len: 1 });
                }
                m.meta_reads = touched.len() as u64;
                m.meta_writes = written.len() as u64;
            }
        }
        Ok(m)
    }

    /// Unmaps everything, returning data runs and index blocks to free.
    pub fn clear(&mut self) -> Vec<Run> {
        let mut runs: Vec<Run> = self.extents().iter().map(|e| Run { start: e.physical, len: e.len }).collect();
        runs.extend(self.index_blocks().into_iter().map(|b| Run { start: b, len: 1 }));
        self.indirect = IndirectMap::default();
        self.extents.clear();
        self.inline_data.clear();
        runs
    }
}

/// Maps every hole of `[logical, logical + len)` in `list` with blocks from
/// `src`. Returns the extents created, before merging, and the number of
/// extent records written.
pub fn extent_allocate(
    list: &mut ExtentList,
    logical: u64,
    len: u64,
    src: &mut dyn BlockSource,
) -> Result<(Vec<Extent>, u64), FeatureError> {
    let mut created = Vec::new();
    let mut records = 0;
    for (l0, n) in list.holes(logical, len) {
        let mut l = l0;
        for run in src.data_blocks(l0, n)? {
            let e = Extent { logical: l, physical: run.start, len: run.len };
            records += list.insert(e);
            created.push(e);
            l += run.len;
        }
    }
    Ok((created, records))
}
