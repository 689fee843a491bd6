use std::collections::BTreeMap;
use std::sync::Arc;

use genfs::blockdev::{Run, SimDisk};
use genfs::features::*;
use parking_lot::Mutex;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BS: usize = 64;

fn storage(cfg: FeatureConfig) -> Storage {
    Storage::new(Arc::new(SimDisk::new(4096, BS)), cfg)
}

fn cfg(map: BlockMapKind, inline: usize) -> FeatureConfig {
    FeatureConfig { block_map: map, inline_threshold: inline, ..FeatureConfig::default() }
}

/// Bit-at-a-time reflected CRC-32, independent of the library used.
fn crc32_bitwise(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 == 1 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
        }
    }
    crc ^ 0xFFFF_FFFF
}

struct Fresh<'a>(&'a SimDisk);

impl BlockSource for Fresh<'_> {
    fn data_blocks(&mut self, _logical: u64, mut len: u64) -> Result<Vec<Run>, FeatureError> {
        let mut out = Vec::new();
        while len > 0 {
            let r = self.0.alloc_run(len).ok_or(FeatureError::DiskFull)?;
            len -= r.len;
            out.push(r);
        }
        Ok(out)
    }

    fn index_block(&mut self) -> Result<u64, FeatureError> {
        self.0.alloc_run(1).map(|r| r.start).ok_or(FeatureError::DiskFull)
    }
}

#[test]
fn request_counts_per_strategy() {
    let disk = SimDisk::new(1024, BS);
    let mut ind = BlockMapHandle::new(MapStrategy::Indirect);
    assert_eq!(ind.map_write(0, 8, &mut Fresh(&disk)).unwrap().requests.len(), 8);
    assert_eq!(ind.map_read(0, 8).requests.len(), 8);
    let mut ext = BlockMapHandle::new(MapStrategy::Extent);
    ext.map_write(0, 8, &mut Fresh(&disk)).unwrap();
    assert_eq!(ext.map_read(0, 8).requests.len(), 1);

    let s = storage(FeatureConfig::default());
    let mut f = s.new_file(1);
    s.write(&mut f, 0, &[7u8; 100]).unwrap();
    let before = s.disk().counters();
    assert_eq!(s.read(&mut f, 0, 100), vec![7u8; 100]);
    assert_eq!(s.disk().counters().delta(&before).io_ops, 0);
    assert_eq!(s.disk().allocated_blocks(), 0);
}

#[test]
fn extent_allocate_fresh_pool_and_fragmented() {
    let disk = SimDisk::new(256, BS);
    let mut list = ExtentList::default();
    let (made, _) = extent_allocate(&mut list, 0, 8, &mut DiskSource::new(&disk, None, 1)).unwrap();
    assert_eq!(made, vec![Extent { logical: 0, physical: 0, len: 8 }]);

    // A 16-block reservation at the requested position serves 8 and keeps 8.
    let disk = SimDisk::new(256, BS);
    let pool = Mutex::new(PreallocPool::new(PoolKind::Tree));
    let r = disk.alloc_at(100, 16).unwrap();
    pool.lock().reserve(5, 0, r);
    let mut list = ExtentList::default();
    let (made, _) = extent_allocate(&mut list, 0, 8, &mut DiskSource::new(&disk, Some(&pool), 5)).unwrap();
    assert_eq!(made, vec![Extent { logical: 0, physical: 100, len: 8 }]);
    assert_eq!(pool.lock().runs(), vec![PoolRun { owner: 5, logical: 8, physical: 108, len: 8 }]);

    // Free runs of at most 4 blocks: 8 blocks come back as two extents.
    let disk = SimDisk::new(64, BS);
    let all = disk.alloc_run(64).unwrap();
    disk.free_run(all);
    let mut used = [false; 64];
    for b in (4..64).step_by(5) {
        disk.alloc_at(b, 1).unwrap();
        used[b as usize] = true;
    }
    let mut expect = Vec::new();
    let (mut need, mut b, mut l) = (8u64, 0usize, 0u64);
    while need > 0 {
        if used[b] {
            b += 1;
            continue;
        }
        let start = b;
        while b < 64 && !used[b] && ((b - start) as u64) < need {
            b += 1;
        }
        let n = (b - start) as u64;
        expect.push(Extent { logical: l, physical: start as u64, len: n });
        l += n;
        need -= n;
    }
    let mut list = ExtentList::default();
    let (made, _) = extent_allocate(&mut list, 0, 8, &mut DiskSource::new(&disk, None, 1)).unwrap();
    assert_eq!(made.len(), 2);
    assert_eq!(made, expect);
}

#[test]
fn pool_lookup_costs() {
    let n = 1024u64;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut list = PreallocPool::new(PoolKind::List);
    let mut tree = PreallocPool::new(PoolKind::Tree);
    for owner in 0..n {
        let run = Run { start: owner * 4, len: 4 };
        list.reserve(owner, 0, run);
        tree.reserve(owner, 0, run);
    }
    let takes = 200;
    for _ in 0..takes {
        let owner = rng.random_range(0..n);
        let before = tree.visits();
        let a = list.take(owner, 0, 1);
        let b = tree.take(owner, 0, 1);
        assert_eq!(a, b);
        assert!(tree.visits() - before <= 11);
        // put it back so the pool size stays n
        let r = a.unwrap();
        let rest = list.take(owner, 1, 3).unwrap();
        tree.take(owner, 1, 3).unwrap();
        list.reserve(owner, 0, Run { start: r.physical, len: 4 });
        tree.reserve(owner, 0, Run { start: r.physical, len: 4 });
        assert_eq!(rest.physical, r.physical + 1);
    }
    let avg = list.visits() as f64 / (2 * takes) as f64;
    assert!(avg > n as f64 / 4.0, "list average {avg}");
    assert!(tree.visits() < list.visits() / 10);
}

#[test]
fn promotion_and_threshold() {
    for map in [BlockMapKind::Indirect, BlockMapKind::Extent] {
        let s = storage(cfg(map, 128));
        let mut f = s.new_file(1);
        let first: Vec<u8> = (0..60).collect();
        s.write(&mut f, 0, &first).unwrap();
        s.write(&mut f, 60, &[9u8; 40]).unwrap();
        assert_eq!(f.map.strategy, MapStrategy::Inline);
        assert_eq!(s.owned_blocks(&f), 0);
        s.write(&mut f, 100, &[1u8; 100]).unwrap();
        assert_eq!(f.map.strategy, MapStrategy::from(map));
        let mut expect = first.clone();
        expect.extend([9u8; 40]);
        expect.extend([1u8; 100]);
        assert_eq!(s.read(&mut f, 0, 1000), expect);
    }
    let s = storage(cfg(BlockMapKind::Extent, 0));
    let f = s.new_file(1);
    assert_eq!(f.map.strategy, MapStrategy::Extent);
}

#[test]
fn delayed_allocation_examples() {
    let delayed = |limit| FeatureConfig {
        delayed: DelayedConfig { enabled: true, limit_blocks: limit },
        inline_threshold: 0,
        ..FeatureConfig::default()
    };
    let s = storage(delayed(64));
    let mut f = s.new_file(1);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let b = rng.random_range(0..10u64);
        s.write(&mut f, b * BS as u64, &[b as u8; BS]).unwrap();
    }
    assert_eq!(s.disk().counters().data_writes, 0);
    s.sync();
    assert!(s.disk().counters().data_writes <= 10);

    let s = storage(delayed(64));
    let mut f = s.new_file(1);
    s.write(&mut f, 0, &[3u8; 10]).unwrap();
    assert_eq!(s.sync(), 1);
    assert_eq!(s.disk().counters().data_writes, 1);

    let s = storage(delayed(64));
    let mut f = s.new_file(1);
    s.write(&mut f, 0, &[4u8; 3 * BS]).unwrap();
    let before = s.disk().counters().data_reads;
    assert_eq!(s.read(&mut f, BS as u64, BS as u64), vec![4u8; BS]);
    assert_eq!(s.disk().counters().data_reads, before);
}

#[test]
fn checksum_examples() {
    assert_eq!(crc32(b""), 0);
    assert_eq!(crc32(b"123456789"), crc32_bitwise(b"123456789"));
    let s = storage(FeatureConfig { checksums: true, inline_threshold: 0, ..FeatureConfig::default() });
    let mut f = s.new_file(3);
    s.write(&mut f, 0, &[1u8; 200]).unwrap();
    s.verify(&f).unwrap();
    let meta = f.meta_bytes();
    let stored = f.checksum.unwrap();
    for i in 0..meta.len() {
        let mut m = meta.clone();
        m[i] ^= 0x5A;
        assert!(matches!(stored.verify(&m), Err(FeatureError::ChecksumMismatch { .. })), "byte {i}");
    }
    f.size += 1;
    assert_eq!(
        s.verify(&f),
        Err(FeatureError::ChecksumMismatch { expected: stored.stored, found: crc32(&f.meta_bytes()) })
    );
}

#[test]
fn timestamp_examples() {
    let clock = Arc::new(ManualClock::new(1_000));
    let s = Storage::with_clock(
        Arc::new(SimDisk::new(64, BS)),
        FeatureConfig { timestamps: true, ..FeatureConfig::default() },
        clock.clone(),
    );
    let mut f = s.new_file(1);
    clock.advance(10);
    s.write(&mut f, 0, b"abc").unwrap();
    assert_eq!((f.times.atime, f.times.mtime, f.times.ctime), (0, 1_010, 1_010));
    clock.advance(5);
    s.read(&mut f, 0, 3);
    assert_eq!((f.times.atime, f.times.mtime, f.times.ctime), (1_015, 1_010, 1_010));
    s.read(&mut f, 0, 3);
    assert_eq!(f.times.atime, 1_015);
}

#[derive(Debug, Clone)]
enum Op {
    Write(u64, Vec<u8>),
    Read(u64, u64),
    Sync,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0u64..1200, prop::collection::vec(any::<u8>(), 1..300)).prop_map(|(o, d)| Op::Write(o, d)),
        3 => (0u64..1500, 0u64..400).prop_map(|(o, l)| Op::Read(o, l)),
        1 => Just(Op::Sync),
    ]
}

fn configs() -> Vec<FeatureConfig> {
    let mut out = Vec::new();
    for map in [BlockMapKind::Indirect, BlockMapKind::Extent] {
        for inline in [0, 128] {
            for (pre, pool) in [(false, PoolKind::List), (true, PoolKind::List), (true, PoolKind::Tree)] {
                for delayed in [false, true] {
                    out.push(FeatureConfig {
                        block_map: map,
                        inline_threshold: inline,
                        prealloc: PreallocConfig { enabled: pre, pool },
                        delayed: DelayedConfig { enabled: delayed, limit_blocks: 4 },
                        checksums: true,
                        timestamps: true,
                    });
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strategies_read_back_identically(script in prop::collection::vec(op(), 1..25)) {
        for c in configs() {
            let s = storage(c);
            let mut files = [s.new_file(1), s.new_file(2)];
            let mut model: [Vec<u8>; 2] = [Vec::new(), Vec::new()];
            for (i, o) in script.iter().enumerate() {
                let k = i % 2;
                match o {
                    Op::Write(off, d) => {
                        s.write(&mut files[k], *off, d).unwrap();
                        let end = *off as usize + d.len();
                        if model[k].len() < end {
                            model[k].resize(end, 0);
                        }
                        model[k][*off as usize..end].copy_from_slice(d);
                    }
                    Op::Read(off, len) => {
                        let got = s.read(&mut files[k], *off, *len);
                        let m = &model[k];
                        let lo = (*off as usize).min(m.len());
                        let hi = (*off as usize + *len as usize).min(m.len());
                        prop_assert_eq!(&got[..], &m[lo..hi], "config {:?}", c);
                    }
                    Op::Sync => {
                        s.sync();
                    }
                }
                s.verify(&files[k]).unwrap();
            }
            // Reserved runs never overlap blocks a file owns.
            let pool = s.pool_snapshot();
            for f in &files {
                for e in f.map.extents() {
                    for r in pool.runs() {
                        prop_assert!(r.physical + r.len <= e.physical || e.physical + e.len <= r.physical);
                    }
                }
            }
            for f in &mut files {
                s.release(f);
            }
            s.drain_pool();
            prop_assert_eq!(s.disk().allocated_blocks(), 0);
        }
    }

    #[test]
    fn extent_list_matches_brute_force(allocs in prop::collection::vec((0u64..64, 1u64..12), 1..20), holes in prop::collection::vec(0u64..128, 0..20)) {
        let disk = SimDisk::new(512, 8);
        for h in holes {
            disk.alloc_at(h * 3, 1);
        }
        let mut list = ExtentList::default();
        let mut oracle: BTreeMap<u64, u64> = BTreeMap::new();
        for (l, n) in allocs {
            let (made, _) = extent_allocate(&mut list, l, n, &mut DiskSource::new(&disk, None, 1)).unwrap();
            for e in made {
                for i in 0..e.len {
                    prop_assert!(oracle.insert(e.logical + i, e.physical + i).is_none());
                }
            }
        }
        let ex = list.as_slice();
        for w in ex.windows(2) {
            prop_assert!(w[0].logical_end() <= w[1].logical);
        }
        let mut flat = BTreeMap::new();
        for e in ex {
            for i in 0..e.len {
                prop_assert!(flat.insert(e.logical + i, e.physical + i).is_none());
            }
        }
        prop_assert_eq!(flat, oracle);
    }

    #[test]
    fn pool_variants_agree(ops in prop::collection::vec((0u64..8, 0u64..64, 1u64..20, any::<bool>()), 1..80)) {
        let mut list = PreallocPool::new(PoolKind::List);
        let mut tree = PreallocPool::new(PoolKind::Tree);
        let mut phys = 0;
        for (owner, logical, len, reserve) in ops {
            if reserve {
                let run = Run { start: phys, len };
                phys += len;
                prop_assert_eq!(list.reserve(owner, logical, run), tree.reserve(owner, logical, run));
            } else {
                prop_assert_eq!(list.take(owner, logical, len), tree.take(owner, logical, len));
            }
            prop_assert_eq!(list.runs(), tree.runs());
        }
    }
}
