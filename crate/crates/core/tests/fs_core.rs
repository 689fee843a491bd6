use std::collections::BTreeSet;
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use genfs::blockdev::SimDisk;
use genfs::features::{BlockMapKind, FeatureConfig};
use genfs::fs::*;

fn tree_ab() -> FsState {
    let fs = FsState::default();
    assert_eq!(fs.ins(&[], "a", InodeKind::Dir), 0);
    assert_eq!(fs.ins(&["a"], "b", InodeKind::Dir), 0);
    fs
}

fn id_of(fs: &FsState, path: &[&str]) -> u64 {
    let g = fs.locate(fs.lock(fs.root()), path).unwrap();
    g.id()
}

#[test]
fn locate_examples() {
    let fs = tree_ab();
    let root = fs.lock(fs.root());
    let same = fs.locate(root, &[]).unwrap();
    assert_eq!(same.id(), ROOT_INUM);
    assert_eq!(fs.monitor().held_current(), vec![Subject::Inode(ROOT_INUM)]);
    drop(same);

    let (a, b) = (id_of(&fs, &["a"]), id_of(&fs, &["a", "b"]));
    let mon = fs.monitor().clone();
    let start = mon.events().len();
    let got = fs.locate(fs.lock(fs.root()), &["a", "b"]).unwrap();
    assert_eq!(got.id(), b);
    assert_eq!(mon.held_current(), vec![Subject::Inode(b)]);
    // Hand-built coupling trace: child acquired before parent released.
    let expected = vec![
        (Action::Acquire, Subject::Inode(ROOT_INUM)),
        (Action::Acquire, Subject::Inode(a)),
        (Action::Release, Subject::Inode(ROOT_INUM)),
        (Action::Acquire, Subject::Inode(b)),
        (Action::Release, Subject::Inode(a)),
    ];
    let log: Vec<_> = mon.events()[start..].iter().map(|e| (e.action, e.subject)).collect();
    assert_eq!(log, expected);
    drop(got);

    assert!(fs.locate(fs.lock(fs.root()), &["a", "x"]).is_none());
    assert!(mon.held_current().is_empty());
    assert!(mon.violations().is_empty());
}

#[test]
fn ins_and_check_ins() {
    let fs = FsState::default();
    assert_eq!(fs.ins(&[], "f", InodeKind::File), 0);
    assert!(fs.snapshot().contains_key("/f"));
    fs.ins(&[], "a", InodeKind::Dir);
    assert_eq!(fs.ins(&["a"], "f", InodeKind::File), 0);
    assert_eq!(fs.ins(&["a"], "f", InodeKind::File), -1);
    assert_eq!(fs.ins(&["f"], "x", InodeKind::File), -1);
    assert_eq!(fs.ins(&["missing"], "x", InodeKind::File), -1);
    assert_eq!(fs.ins(&[], "bad/name", InodeKind::File), -1);

    let dir = fs.lock(fs.root());
    let dir = fs.check_ins(dir, "fresh").unwrap();
    assert_eq!(fs.monitor().held_current(), vec![Subject::Inode(ROOT_INUM)]);
    drop(dir);
    assert!(fs.check_ins(fs.lock(fs.root()), "f").is_err());
    assert!(fs.monitor().held_current().is_empty());
    let file = fs.locate(fs.lock(fs.root()), &["f"]).unwrap();
    assert!(fs.check_ins(file, "x").is_err());
    assert!(fs.monitor().held_current().is_empty());
    assert!(fs.monitor().violations().is_empty());
}

#[test]
fn parallel_inserts_under_one_dir() {
    let fs = Arc::new(FsState::default());
    fs.ins(&[], "d", InodeKind::Dir);
    let hs: Vec<_> = (0..8)
        .map(|t| {
            let fs = fs.clone();
            thread::spawn(move || (0..1000).all(|i| fs.ins(&["d"], &format!("t{t}_{i}"), InodeKind::File) == 0))
        })
        .collect();
    for h in hs {
        assert!(h.join().unwrap());
    }
    let n = fs.snapshot().keys().filter(|k| k.starts_with("/d/")).count();
    assert_eq!(n, 8000);
    assert!(fs.monitor().report().is_clean());
}

#[test]
fn remove_examples() {
    let fs = tree_ab();
    fs.ins(&["a"], "f", InodeKind::File);
    assert_eq!(fs.remove(&["a"], "f"), 0);
    assert!(!fs.snapshot().contains_key("/a/f"));
    assert_eq!(fs.remove(&["a"], "f"), -1);
    assert_eq!(fs.remove(&[], "a"), -1, "non-empty directory");
    assert_eq!(fs.remove(&["a"], "b"), 0);
    assert_eq!(fs.remove(&[], "a"), 0);

    let fs = Arc::new(FsState::default());
    fs.ins(&[], "d", InodeKind::Dir);
    let hs: Vec<_> = (0..4)
        .map(|t| {
            let fs = fs.clone();
            thread::spawn(move || {
                for i in 0..200 {
                    fs.ins(&["d"], &format!("{t}_{i}"), InodeKind::File);
                }
                for i in (0..200).step_by(3) {
                    assert_eq!(fs.remove(&["d"], &format!("{t}_{i}")), 0);
                }
            })
        })
        .collect();
    for h in hs {
        h.join().unwrap();
    }
    let expect: BTreeSet<String> =
        (0..4).flat_map(|t| (0..200).filter(|i| i % 3 != 0).map(move |i| format!("/d/{t}_{i}"))).collect();
    let got: BTreeSet<String> = fs.snapshot().into_keys().filter(|k| k.starts_with("/d/")).collect();
    assert_eq!(got, expect);
}

#[test]
fn rename_examples() {
    let fs = FsState::default();
    fs.ins(&[], "a", InodeKind::Dir);
    fs.ins(&[], "b", InodeKind::Dir);
    fs.ins(&["a"], "f", InodeKind::File);
    fs.write(&["a", "f"], 0, b"data");
    assert_eq!(fs.rename(&["a"], "f", &["b"], "g"), 0);
    let snap = fs.snapshot();
    assert_eq!(snap.get("/b/g"), Some(&SnapshotNode::File(b"data".to_vec())));
    assert!(!snap.contains_key("/a/f"));

    fs.ins(&["a"], "d", InodeKind::Dir);
    fs.ins(&["a", "d"], "x", InodeKind::Dir);
    assert_eq!(fs.rename(&["a"], "d", &["a", "d", "x"], "d2"), -1);
    assert_eq!(fs.rename(&["a"], "d", &["a", "d"], "d2"), -1);
    assert_eq!(fs.rename(&["a"], "missing", &["b"], "z"), -1);
    assert_eq!(fs.rename(&["a"], "d", &["b"], "g"), -1, "destination exists");
    assert_eq!(fs.rename(&["a"], "d", &["a"], "e"), 0);
    assert_eq!(fs.rename(&["a", "e", "x"], "", &["b"], "y"), -1);
    assert_eq!(fs.rename(&["a", "e"], "x", &[], "top"), 0);
    assert!(fs.snapshot().contains_key("/top"));
    assert_eq!(fs.check_tree().unwrap(), 6);
    assert!(fs.monitor().report().is_clean());
}

#[test]
fn crossing_renames_finish() {
    let fs = Arc::new(FsState::new(FeatureConfig::default()));
    fs.ins(&[], "a", InodeKind::Dir);
    fs.ins(&[], "b", InodeKind::Dir);
    fs.ins(&["a"], "f", InodeKind::File);
    fs.ins(&["b"], "g", InodeKind::File);
    let iters = 2000;
    let barrier = Arc::new(Barrier::new(2));
    let spawn = |from: &'static str, to: &'static str, name: &'static str| {
        let (fs, barrier) = (fs.clone(), barrier.clone());
        thread::spawn(move || {
            let mut worst = Duration::ZERO;
            for _ in 0..iters {
                barrier.wait();
                let t = Instant::now();
                assert_eq!(fs.rename(&[from], name, &[to], name), 0);
                assert_eq!(fs.rename(&[to], name, &[from], name), 0);
                worst = worst.max(t.elapsed());
            }
            worst
        })
    };
    let h1 = spawn("a", "b", "f");
    let h2 = spawn("b", "a", "g");
    assert!(h1.join().unwrap() < Duration::from_secs(1));
    assert!(h2.join().unwrap() < Duration::from_secs(1));
    let snap = fs.snapshot();
    assert!(snap.contains_key("/a/f") && snap.contains_key("/b/g"));
    assert!(fs.monitor().report().is_clean());
}

#[test]
fn read_write_and_strategy_counters() {
    let fs = FsState::default();
    fs.ins(&[], "f", InodeKind::File);
    assert_eq!(fs.write(&["f"], 0, b"abc"), 0);
    assert_eq!(fs.read(&["f"], 0, 3).unwrap(), b"abc");
    assert_eq!(fs.write(&["f"], 10_000, b"z"), 0);
    assert_eq!(fs.read(&["f"], 5000, 4).unwrap(), vec![0; 4]);
    assert_eq!(fs.read(&["f"], 10_000, 100).unwrap(), b"z", "short read at end of file");
    assert!(fs.read(&["nope"], 0, 1).is_none());
    assert_eq!(fs.write(&[], 0, b"x"), -1);

    for (map, expect) in [(BlockMapKind::Indirect, 3), (BlockMapKind::Extent, 1)] {
        let disk = Arc::new(SimDisk::default());
        let fs = FsState::with_disk(
            disk.clone(),
            FeatureConfig { block_map: map, inline_threshold: 0, ..Default::default() },
        );
        fs.ins(&[], "f", InodeKind::File);
        let before = disk.counters();
        assert_eq!(fs.write(&["f"], 3 * 4096, &vec![1u8; 3 * 4096]), 0);
        assert_eq!(disk.counters().delta(&before).data_writes, expect, "{map:?}");
    }
}

#[test]
fn stress_keeps_discipline() {
    use rand::{Rng, SeedableRng};
    let fs = Arc::new(FsState::with_storage(
        genfs::features::Storage::new(Arc::new(SimDisk::default()), FeatureConfig::default()),
        Arc::new(LockMonitor::new(false)),
    ));
    for d in ["a", "b", "c"] {
        fs.ins(&[], d, InodeKind::Dir);
        fs.ins(&[d], "x", InodeKind::Dir);
    }
    let hs: Vec<_> = (0..4u64)
        .map(|t| {
            let fs = fs.clone();
            thread::spawn(move || {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42 + t);
                let dirs: [&[&str]; 5] = [&[], &["a"], &["b"], &["a", "x"], &["c", "x"]];
                for _ in 0..1500 {
                    let d = dirs[rng.random_range(0..dirs.len())];
                    let name = format!("n{}", rng.random_range(0..6));
                    match rng.random_range(0..5) {
                        0 => drop(fs.ins(d, &name, InodeKind::File)),
                        1 => drop(fs.remove(d, &name)),
                        2 => {
                            let e = dirs[rng.random_range(0..dirs.len())];
                            fs.rename(d, &name, e, &format!("n{}", rng.random_range(0..6)));
                        }
                        3 => {
                            let mut p = d.to_vec();
                            p.push(&name);
                            fs.write(&p, rng.random_range(0..100), b"hello");
                        }
                        _ => {
                            let mut p = d.to_vec();
                            p.push(&name);
                            fs.read(&p, 0, 10);
                        }
                    }
                    assert!(fs.monitor().held_current().is_empty());
                }
            })
        })
        .collect();
    for h in hs {
        h.join().unwrap();
    }
    let r = fs.monitor().report();
    assert!(r.is_clean(), "{:?}", r.violations);
    assert!(r.peak_coupling <= 2);
    fs.check_tree().unwrap();
}

#[test]
fn small_scenarios_are_serializable() {
    for s in seeded_scenarios(7, 6, 3, 5) {
        let r = explore(&s, 2, 3000);
        assert!(r.passed(), "{r:?} for {s:?}");
        assert!(r.schedules > 1);
    }
}

#[test]
fn reduced_exploration_reaches_every_outcome() {
    // Small enough for the unreduced search to finish; the sleep-set search
    // must find the same outcome set with fewer runs.
    for s in seeded_scenarios(11, 6, 3, 4) {
        let full = explore(&s, usize::MAX, 500_000);
        assert!(!full.truncated);
        let reduced = explore_all(&s, 50_000);
        assert!(!reduced.truncated && reduced.passed(), "{reduced:?}");
        assert_eq!(full.distinct_outcomes, reduced.distinct_outcomes, "{s:?}");
        assert!(reduced.schedules <= full.schedules);
    }
}

#[test]
fn explorer_catches_non_serial_outcome() {
    // Two threads each ins the same name: exactly one may win.
    let s = Scenario {
        setup: vec![],
        threads: vec![
            vec![FsOp::Ins { path: "/".into(), name: "x".into(), kind: InodeKind::File }],
            vec![FsOp::Ins { path: "/".into(), name: "x".into(), kind: InodeKind::Dir }],
        ],
    };
    let serial = serial_outcomes(&s);
    assert_eq!(serial.len(), 2);
    let r = explore(&s, 2, 100);
    assert!(r.passed());
    assert_eq!(r.distinct_outcomes, 2);
}

#[test]
fn dcache_semantics() {
    let mon = Arc::new(LockMonitor::default());
    let dc = Arc::new(Dcache::new(DEFAULT_BUCKETS, mon.clone()));
    let e = dc.d_add(10, "name");
    let start = mon.events().len();
    let hit = dc.lookup(10, &Qstr::new("name")).unwrap();
    assert!(Arc::ptr_eq(&hit, &e));
    assert_eq!(e.count(), 1);
    let b = dc.d_hash(10, fnv1a(b"name"));
    let log: Vec<_> = mon.events()[start..].iter().map(|e| (e.action, e.subject)).collect();
    assert_eq!(
        log,
        vec![
            (Action::AcquireShared, Subject::Bucket(b)),
            (Action::Acquire, Subject::Dentry(e.id)),
            (Action::Release, Subject::Dentry(e.id)),
            (Action::ReleaseShared, Subject::Bucket(b)),
        ]
    );
    assert!(dc.lookup(11, &Qstr::new("name")).is_none());
    assert!(dc.lookup(10, &Qstr::new("other")).is_none());
    dc.d_mark_unhashed(&e);
    assert!(dc.lookup(10, &Qstr::new("name")).is_none());
    assert_eq!(e.count(), 1);

    // Stale parent: the first candidate is re-pointed between the bucket
    // read and its lock; the lookup must skip it and find the second.
    let dc = Arc::new(Dcache::new(1, mon.clone()));
    let stale = dc.d_add(1, "n");
    let good = dc.d_add(1, "n");
    let paused = Arc::new(Barrier::new(2));
    let resume = Arc::new(Barrier::new(2));
    let stale_id = stale.id;
    {
        let (paused, resume) = (paused.clone(), resume.clone());
        dc.set_probe(Some(Arc::new(move |cand: &DcacheEntry| {
            if cand.id == stale_id {
                paused.wait();
                resume.wait();
            }
        })));
    }
    let dc2 = dc.clone();
    let looker = thread::spawn(move || dc2.lookup(1, &Qstr::new("n")));
    paused.wait();
    dc.d_set_parent(&stale, 2, "n");
    resume.wait();
    let found = looker.join().unwrap().unwrap();
    assert!(Arc::ptr_eq(&found, &good));
    assert_eq!((stale.count(), good.count()), (0, 1));
    dc.set_probe(None);
    dc.d_rehash(&stale);
    assert!(Arc::ptr_eq(&dc.lookup(2, &Qstr::new("n")).unwrap(), &stale));
    assert!(mon.report().is_clean());
}

#[test]
fn trace_runner() {
    let text = "\
ins / name=a kind=dir
expect ret=0
ins /a name=f kind=file
write /a/f off=0 hex=616263
read /a/f off=0 len=3
expect hex=616263
rename /a f / g
expect ret=0
remove /a name=f
expect ret=-1
read /g off=1 len=9
expect hex=6263
";
    let trace = parse_trace(text).unwrap();
    let fs = FsState::default();
    let r = run_trace(&fs, &trace);
    assert!(r.passed(), "{r:#?}");
    assert_eq!(r.lines.len(), 12);
    let bad = parse_trace("ins / name=a\nexpect ret=-1\n").unwrap();
    assert_eq!(run_trace(&FsState::default(), &bad).failed_expectations, 1);
    assert_eq!(parse_trace("frobnicate /").unwrap_err().line, 1);
    assert!(parse_trace("write /f off=x hex=00").is_err());
}
