//! Controlled interleavings and the serial-equivalence oracle.
//!
//! Worker threads run real file-system operations, but only one runs at a
//! time: each stops before every inode lock acquisition and at every
//! operation start, and a controller picks who continues. Schedules are
//! enumerated depth-first, either up to a preemption bound or exhaustively
//! with sleep-set reduction; each outcome must equal the outcome of some
//! serial order that respects every thread's program order.
//!
//! The reduction treats two steps as independent when they acquire different
//! inode locks (or one of them is an operation start). Under per-inode
//! locking such steps touch disjoint state and commute, so one schedule per
//! equivalence class suffices.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::thread;

use parking_lot::{Condvar, Mutex};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::monitor::{current_thread, LockMonitor, Subject};
use super::state::{FsState, InodeKind, SchedHook, TreeSnapshot};
use super::trace::{FsOp, OpResult};
use crate::blockdev::SimDisk;
use crate::features::{FeatureConfig, Storage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub setup: Vec<FsOp>,
    pub threads: Vec<Vec<FsOp>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome {
    pub results: Vec<Vec<OpResult>>,
    pub tree: TreeSnapshot,
}

fn small_fs(mon: Arc<LockMonitor>) -> FsState {
    let storage = Storage::new(Arc::new(SimDisk::new(512, 64)), FeatureConfig::default());
    FsState::with_storage(storage, mon)
}

fn setup(fs: &FsState, s: &Scenario) {
    for op in &s.setup {
        op.apply(fs);
    }
}

/// Outcomes of every serial order of whole operations that keeps each
/// thread's operations in program order.
pub fn serial_outcomes(s: &Scenario) -> BTreeSet<Outcome> {
    let mut out = BTreeSet::new();
    let mut order = Vec::new();
    let mut next = vec![0usize; s.threads.len()];
    serial_rec(s, &mut next, &mut order, &mut out);
    out
}

fn serial_rec(s: &Scenario, next: &mut [usize], order: &mut Vec<usize>, out: &mut BTreeSet<Outcome>) {
    let mut any = false;
    for t in 0..s.threads.len() {
        if next[t] < s.threads[t].len() {
            any = true;
            next[t] += 1;
            order.push(t);
            serial_rec(s, next, order, out);
            order.pop();
            next[t] -= 1;
        }
    }
    if !any {
        let fs = small_fs(Arc::new(LockMonitor::new(false)));
        setup(&fs, s);
        let mut results: Vec<Vec<OpResult>> = s.threads.iter().map(|_| Vec::new()).collect();
        let mut pos = vec![0usize; s.threads.len()];
        for &t in order.iter() {
            results[t].push(s.threads[t][pos[t]].apply(&fs));
            pos[t] += 1;
        }
        out.insert(Outcome { results, tree: fs.snapshot() });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Want {
    Start,
    Lock(Subject),
}

#[derive(Debug, Clone)]
struct Decision {
    enabled: Vec<usize>,
    wants: Vec<Option<Want>>,
    sleep: Vec<(usize, Want)>,
    chosen: usize,
    preemptive: bool,
    prev_enabled: Option<usize>,
}

#[derive(Debug, Default)]
struct CtlState {
    n: usize,
    index: HashMap<u64, usize>,
    waiting: Vec<Option<Want>>,
    done: Vec<bool>,
    active: Option<usize>,
    last: Option<usize>,
    prefix: Vec<usize>,
    decisions: Vec<Decision>,
    deadlock: bool,
    reduce: bool,
    sleep: Vec<(usize, Want)>,
    blocked: bool,
}

/// A thread paired with the step it is about to take.
type Step = (usize, Want);

fn independent(a: (usize, Want), b: (usize, Want)) -> bool {
    a.0 != b.0
        && match (a.1, b.1) {
            (Want::Lock(x), Want::Lock(y)) => x != y,
            _ => true,
        }
}

struct Controller {
    mon: Arc<LockMonitor>,
    st: Mutex<CtlState>,
    cv: Condvar,
}

impl Controller {
    fn new(mon: Arc<LockMonitor>, n: usize, prefix: Vec<usize>, sleep: Option<Vec<(usize, Want)>>) -> Self {
        let reduce = sleep.is_some();
        let sleep = sleep.unwrap_or_default();
        let st =
            CtlState { n, waiting: vec![None; n], done: vec![false; n], prefix, reduce, sleep, ..CtlState::default() };
        Controller { mon, st: Mutex::new(st), cv: Condvar::new() }
    }

    fn register(&self, i: usize) {
        self.st.lock().index.insert(current_thread(), i);
    }

    fn enabled(&self, st: &CtlState, i: usize) -> bool {
        match st.waiting[i] {
            Some(Want::Start) => true,
            Some(Want::Lock(s)) => self.mon.holder(s).is_none(),
            None => false,
        }
    }

    fn decide(&self, st: &mut CtlState) {
        if st.active.is_some() || st.deadlock {
            return;
        }
        let arrived = (0..st.n).all(|i| st.done[i] || st.waiting[i].is_some());
        if !arrived || st.done.iter().all(|d| *d) {
            return;
        }
        let enabled: Vec<usize> = (0..st.n).filter(|&i| !st.done[i] && self.enabled(st, i)).collect();
        if enabled.is_empty() {
            st.deadlock = true;
            self.cv.notify_all();
            return;
        }
        let prev_enabled = st.last.filter(|l| enabled.contains(l));
        let step = st.decisions.len();
        let free_run = step >= st.prefix.len();
        let awake: Vec<usize> = if st.reduce && free_run {
            enabled.iter().copied().filter(|i| !st.sleep.iter().any(|(s, _)| s == i)).collect()
        } else {
            enabled.clone()
        };
        if awake.is_empty() {
            st.blocked = true;
        }
        let chosen = match st.prefix.get(step) {
            Some(c) if enabled.contains(c) => *c,
            _ => prev_enabled.filter(|p| awake.contains(p)).or(awake.first().copied()).unwrap_or(enabled[0]),
        };
        let preemptive = prev_enabled.is_some_and(|p| p != chosen);
        let wants = st.waiting.clone();
        let sleep = if free_run { st.sleep.clone() } else { Vec::new() };
        if st.reduce && free_run {
            let w = wants[chosen].expect("chosen thread is waiting");
            st.sleep.retain(|&u| independent(u, (chosen, w)));
        }
        st.decisions.push(Decision { enabled, wants, sleep, chosen, preemptive, prev_enabled });
        st.active = Some(chosen);
        st.last = Some(chosen);
        self.cv.notify_all();
    }

    fn yield_point(&self, want: Want) {
        let mut st = self.st.lock();
        let Some(&me) = st.index.get(&current_thread()) else { return };
        st.waiting[me] = Some(want);
        if st.active == Some(me) {
            st.active = None;
        }
        self.decide(&mut st);
        while st.active != Some(me) {
            self.cv.wait(&mut st);
        }
        st.waiting[me] = None;
    }

    fn finish(&self, me: usize) {
        let mut st = self.st.lock();
        st.done[me] = true;
        if st.active == Some(me) {
            st.active = None;
        }
        self.decide(&mut st);
        self.cv.notify_all();
    }

    /// Waits until every worker finished; false on deadlock.
    fn wait(&self) -> bool {
        let mut st = self.st.lock();
        while !st.deadlock && !st.done.iter().all(|d| *d) {
            self.cv.wait(&mut st);
        }
        !st.deadlock
    }
}

struct Hook(Arc<Controller>);

impl SchedHook for Hook {
    fn op_start(&self) {
        self.0.yield_point(Want::Start);
    }

    fn before_acquire(&self, subject: Subject) {
        self.0.yield_point(Want::Lock(subject));
    }
}

struct Run {
    outcome: Option<Outcome>,
    decisions: Vec<Decision>,
    clean: bool,
    blocked: bool,
}

fn run_schedule(s: &Scenario, prefix: Vec<usize>, sleep: Option<Vec<(usize, Want)>>) -> Run {
    let mon = Arc::new(LockMonitor::new(false));
    let ctl = Arc::new(Controller::new(mon.clone(), s.threads.len(), prefix, sleep));
    let fs = Arc::new(small_fs(mon.clone()).with_hook(Arc::new(Hook(ctl.clone()))));
    setup(&fs, s);
    let handles: Vec<_> = s
        .threads
        .iter()
        .enumerate()
        .map(|(i, ops)| {
            let (fs, ctl, ops) = (fs.clone(), ctl.clone(), ops.clone());
            thread::spawn(move || {
                ctl.register(i);
                let r: Vec<OpResult> = ops.iter().map(|op| op.apply(&fs)).collect();
                ctl.finish(i);
                r
            })
        })
        .collect();
    if !ctl.wait() {
        // Workers stay parked in the controller; they are abandoned.
        let st = ctl.st.lock();
        return Run { outcome: None, decisions: st.decisions.clone(), clean: false, blocked: st.blocked };
    }
    let results = handles.into_iter().map(|h| h.join().expect("worker panicked")).collect();
    let tree = fs.snapshot();
    let clean = mon.report().is_clean() && fs.check_tree().is_ok();
    let st = ctl.st.lock();
    Run { outcome: Some(Outcome { results, tree }), decisions: st.decisions.clone(), clean, blocked: st.blocked }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub schedules: usize,
    pub serial_outcomes: usize,
    pub distinct_outcomes: usize,
    pub non_serial: usize,
    pub deadlocks: usize,
    pub unclean: usize,
    /// Runs cut short by the reduction: every enabled thread was asleep.
    #[serde(default)]
    pub sleep_blocked: usize,
    pub truncated: bool,
}

impl ExploreReport {
    pub fn passed(&self) -> bool {
        self.non_serial == 0 && self.deadlocks == 0 && self.unclean == 0
    }

    fn record(&mut self, run: &Run, serial: &BTreeSet<Outcome>, seen: &mut BTreeSet<Outcome>) {
        self.schedules += 1;
        match &run.outcome {
            None => self.deadlocks += 1,
            Some(o) => {
                if !serial.contains(o) {
                    self.non_serial += 1;
                }
                seen.insert(o.clone());
            }
        }
        if !run.clean {
            self.unclean += 1;
        }
        if run.blocked {
            self.sleep_blocked += 1;
        }
    }
}

/// Enumerates schedules with at most `bound` preemptions (up to
/// `max_schedules`) and checks each outcome against the serial set.
pub fn explore(s: &Scenario, bound: usize, max_schedules: usize) -> ExploreReport {
    let serial = serial_outcomes(s);
    let mut seen = BTreeSet::new();
    let mut rep = ExploreReport { serial_outcomes: serial.len(), ..ExploreReport::default() };
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        if rep.schedules == max_schedules {
            rep.truncated = true;
            break;
        }
        let plen = prefix.len();
        let run = run_schedule(s, prefix, None);
        rep.record(&run, &serial, &mut seen);
        let mut used = 0;
        for (i, d) in run.decisions.iter().enumerate() {
            if i >= plen {
                for &alt in &d.enabled {
                    if alt == d.chosen {
                        continue;
                    }
                    let extra = d.prev_enabled.is_some_and(|p| p != alt) as usize;
                    if used + extra <= bound {
                        let mut p: Vec<usize> = run.decisions[..i].iter().map(|d| d.chosen).collect();
                        p.push(alt);
                        stack.push(p);
                    }
                }
            }
            used += d.preemptive as usize;
        }
    }
    rep.distinct_outcomes = seen.len();
    rep
}

/// Explores every interleaving up to sleep-set equivalence (no preemption
/// bound), stopping after `max_schedules` runs.
pub fn explore_all(s: &Scenario, max_schedules: usize) -> ExploreReport {
    let serial = serial_outcomes(s);
    let mut seen = BTreeSet::new();
    let mut rep = ExploreReport { serial_outcomes: serial.len(), ..ExploreReport::default() };
    let mut stack: Vec<(Vec<usize>, Vec<Step>)> = vec![(Vec::new(), Vec::new())];
    while let Some((prefix, sleep)) = stack.pop() {
        if rep.schedules == max_schedules {
            rep.truncated = true;
            break;
        }
        let plen = prefix.len();
        let run = run_schedule(s, prefix, Some(sleep));
        rep.record(&run, &serial, &mut seen);
        for (i, d) in run.decisions.iter().enumerate().skip(plen) {
            let asleep = |t: usize| d.sleep.iter().any(|(u, _)| *u == t);
            if asleep(d.chosen) {
                // Blocked point: everything below is covered elsewhere.
                break;
            }
            let want = |t: usize| (t, d.wants[t].expect("enabled thread is waiting"));
            let mut done: Vec<(usize, Want)> = d.sleep.clone();
            done.push(want(d.chosen));
            for &alt in d.enabled.iter().filter(|&&t| t != d.chosen && !asleep(t)) {
                let child: Vec<_> = done.iter().copied().filter(|&u| independent(u, want(alt))).collect();
                let mut p: Vec<usize> = run.decisions[..i].iter().map(|d| d.chosen).collect();
                p.push(alt);
                stack.push((p, child));
                done.push(want(alt));
            }
        }
    }
    rep.distinct_outcomes = seen.len();
    rep
}

const NAMES: [&str; 4] = ["x", "c", "f", "n"];
const DIRS: [&str; 4] = ["/", "/a", "/b", "/a/c"];
const FILES: [&str; 3] = ["/a/x", "/b/x", "/a/c/f"];

fn pick(rng: &mut ChaCha8Rng, from: &[&str]) -> String {
    from.choose(rng).expect("non-empty").to_string()
}

/// A small random scenario over a three-level tree (`/a/c/f`, `/a/x`,
/// `/b/x`), with between `threads` and `max_ops` operations in total.
pub fn random_scenario(rng: &mut ChaCha8Rng, threads: usize, max_ops: usize) -> Scenario {
    let dir = |p: &str, n: &str| FsOp::Ins { path: p.into(), name: n.into(), kind: InodeKind::Dir };
    let file = |p: &str, n: &str| FsOp::Ins { path: p.into(), name: n.into(), kind: InodeKind::File };
    let setup = vec![
        dir("/", "a"),
        dir("/", "b"),
        dir("/a", "c"),
        file("/a/c", "f"),
        file("/a", "x"),
        file("/b", "x"),
        FsOp::Write { path: "/a/c/f".into(), off: 0, data: b"xyz".to_vec() },
    ];
    let total = rng.random_range(threads..=max_ops.max(threads));
    let mut per = vec![1usize; threads];
    for _ in threads..total {
        per[rng.random_range(0..threads)] += 1;
    }
    let threads = per
        .into_iter()
        .map(|n| {
            (0..n)
                .map(|_| match rng.random_range(0..5) {
                    0 => FsOp::Ins {
                        path: pick(rng, &DIRS),
                        name: pick(rng, &NAMES),
                        kind: if rng.random_bool(0.5) { InodeKind::Dir } else { InodeKind::File },
                    },
                    1 => FsOp::Remove { path: pick(rng, &DIRS), name: pick(rng, &NAMES) },
                    2 => FsOp::Rename {
                        src: pick(rng, &DIRS),
                        src_name: pick(rng, &NAMES),
                        dst: pick(rng, &DIRS),
                        dst_name: pick(rng, &NAMES),
                    },
                    3 => FsOp::Write {
                        path: pick(rng, &FILES),
                        off: rng.random_range(0..4),
                        data: vec![b'0' + rng.random_range(0..10u8)],
                    },
                    _ => FsOp::Read { path: pick(rng, &FILES), off: 0, len: 8 },
                })
                .collect()
        })
        .collect();
    Scenario { setup, threads }
}

pub fn seeded_scenarios(seed: u64, count: usize, threads: usize, max_ops: usize) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_scenario(&mut rng, threads, max_ops)).collect()
}
