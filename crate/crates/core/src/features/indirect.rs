//! Classic direct / single-indirect / double-indirect block pointers. Index
//! nodes occupy disk blocks; their contents are kept in memory and every
//! access is charged as one metadata operation per node.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub const DIRECT: u64 = 12;
pub const PTRS_PER_NODE: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Node1 {
    phys: u64,
    slots: Vec<Option<u64>>,
}

impl Node1 {
    fn new(phys: u64) -> Self {
        Node1 { phys, slots: vec![None; PTRS_PER_NODE as usize] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Node2 {
    phys: u64,
    children: Vec<Option<Node1>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndirectMap {
    direct: [Option<u64>; DIRECT as usize],
    single: Option<Node1>,
    double: Option<Node2>,
}

pub const MAX_BLOCKS: u64 = DIRECT + PTRS_PER_NODE + PTRS_PER_NODE * PTRS_PER_NODE;

impl IndirectMap {
    /// Physical block for `idx`; index nodes consulted go into `touched`.
    pub fn lookup(&self, idx: u64, touched: &mut BTreeSet<u64>) -> Option<u64> {
        if idx < DIRECT {
            return self.direct[idx as usize];
        }
        let idx = idx - DIRECT;
        if idx < PTRS_PER_NODE {
            let n = self.single.as_ref()?;
            touched.insert(n.phys);
            return n.slots[idx as usize];
        }
        let idx = idx - PTRS_PER_NODE;
        let top = self.double.as_ref()?;
        touched.insert(top.phys);
        let child = top.children.get((idx / PTRS_PER_NODE) as usize)?.as_ref()?;
        touched.insert(child.phys);
        child.slots[(idx % PTRS_PER_NODE) as usize]
    }

    /// Sets the pointer for `idx`. Missing index nodes are created with
    /// blocks from `new_node`; nodes modified go into `written`.
    pub fn set<E>(
        &mut self,
        idx: u64,
        phys: u64,
        written: &mut BTreeSet<u64>,
        new_node: &mut dyn FnMut() -> Result<u64, E>,
    ) -> Result<(), E> {
        if idx < DIRECT {
            self.direct[idx as usize] = Some(phys);
            return Ok(());
        }
        let idx = idx - DIRECT;
        if idx < PTRS_PER_NODE {
            if self.single.is_none() {
                self.single = Some(Node1::new(new_node()?));
            }
            let n = self.single.as_mut().expect("created above");
            written.insert(n.phys);
            n.slots[idx as usize] = Some(phys);
            return Ok(());
        }
        let idx = idx - PTRS_PER_NODE;
        if self.double.is_none() {
            self.double = Some(Node2 { phys: new_node()?, children: vec![None; PTRS_PER_NODE as usize] });
        }
        let top = self.double.as_mut().expect("created above");
        let slot = &mut top.children[(idx / PTRS_PER_NODE) as usize];
        if slot.is_none() {
            *slot = Some(Node1::new(new_node()?));
            written.insert(top.phys);
        }
        let child = slot.as_mut().expect("created above");
        written.insert(child.phys);
        child.slots[(idx % PTRS_PER_NODE) as usize] = Some(phys);
        Ok(())
    }

    /// Every mapped `(logical, physical)` pair in logical order.
    pub fn pairs(&self) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for (i, p) in self.direct.iter().enumerate() {
            if let Some(p) = p {
                out.push((i as u64, *p));
            }
        }
        if let Some(n) = &self.single {
            for (i, p) in n.slots.iter().enumerate() {
                if let Some(p) = p {
                    out.push((DIRECT + i as u64, *p));
                }
            }
        }
        if let Some(top) = &self.double {
            for (c, child) in top.children.iter().enumerate() {
                if let Some(child) = child {
                    for (i, p) in child.slots.iter().enumerate() {
                        if let Some(p) = p {
                            out.push((DIRECT + PTRS_PER_NODE + c as u64 * PTRS_PER_NODE + i as u64, *p));
                        }
                    }
                }
            }
        }
        out
    }

    /// Blocks holding index nodes.
    pub fn index_blocks(&self) -> Vec<u64> {
        let mut out = Vec::new();
        if let Some(n) = &self.single {
            out.push(n.phys);
        }
        if let Some(top) = &self.double {
            out.push(top.phys);
            out.extend(top.children.iter().flatten().map(|c| c.phys));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_levels() {
        let mut m = IndirectMap::default();
        let mut next = 1000;
        let mut alloc = || -> Result<u64, ()> {
            next += 1;
            Ok(next)
        };
        let mut w = BTreeSet::new();
        for idx in [0, 11, 12, 1035, 1036, 5000] {
            m.set(idx, idx + 1, &mut w, &mut alloc).unwrap();
        }
        // single node, double top, double children 0 and 3
        assert_eq!(m.index_blocks().len(), 4);
        let mut t = BTreeSet::new();
        assert_eq!(m.lookup(5000, &mut t), Some(5001));
        assert_eq!(t.len(), 2);
        assert_eq!(m.lookup(13, &mut BTreeSet::new()), None);
        assert_eq!(m.pairs().len(), 6);
    }
}
