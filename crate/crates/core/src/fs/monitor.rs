//! Runtime lock-discipline monitor: per-thread held-lock multisets and a
//! totally ordered event log.

use std::cell::Cell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

static NEXT_THREAD: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static THREAD_ID: Cell<u64> = const { Cell::new(0) };
}

/// Small stable id for the calling thread.
pub fn current_thread() -> u64 {
    THREAD_ID.with(|c| {
        if c.get() == 0 {
            c.set(NEXT_THREAD.fetch_add(1, Ordering::Relaxed));
        }
        c.get()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Subject {
    Inode(u64),
    Dentry(u64),
    /// Shared read-side section over one dcache bucket.
    Bucket(usize),
}

impl std::fmt::Display for Subject {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Subject::Inode(i) => write!(f, "inode {i}"),
            Subject::Dentry(i) => write!(f, "dentry {i}"),
            Subject::Bucket(b) => write!(f, "bucket {b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Acquire,
    Release,
    AcquireShared,
    ReleaseShared,
    Mutate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub thread: u64,
    pub subject: Subject,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub thread: u64,
    pub seq: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub events: u64,
    pub violations: Vec<Violation>,
    /// Most inode locks one thread held inside a coupling window.
    pub peak_coupling: usize,
    /// Locks still held, per thread.
    pub held: Vec<(u64, Vec<Subject>)>,
}

impl MonitorReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.held.is_empty()
    }
}

#[derive(Debug, Default)]
struct State {
    seq: u64,
    held: HashMap<u64, Vec<(Subject, bool)>>,
    owner: HashMap<Subject, u64>,
    log: Vec<Event>,
    violations: Vec<Violation>,
    peak_coupling: usize,
}

#[derive(Debug)]
pub struct LockMonitor {
    keep_log: bool,
    state: Mutex<State>,
}

impl Default for LockMonitor {
    fn default() -> Self {
        LockMonitor::new(true)
    }
}

impl LockMonitor {
    /// With `keep_log` false only the event count is kept.
    pub fn new(keep_log: bool) -> Self {
        LockMonitor { keep_log, state: Mutex::new(State::default()) }
    }

    fn record(&self, st: &mut State, thread: u64, subject: Subject, action: Action) -> u64 {
        st.seq += 1;
        if self.keep_log {
            st.log.push(Event { seq: st.seq, thread, subject, action });
        }
        st.seq
    }

    fn violate(st: &mut State, thread: u64, message: String) {
        let seq = st.seq;
        st.violations.push(Violation { thread, seq, message });
    }

    pub fn acquire(&self, subject: Subject) {
        let t = current_thread();
        let mut st = self.state.lock();
        self.record(&mut st, t, subject, Action::Acquire);
        if let Some(other) = st.owner.insert(subject, t) {
            Self::violate(&mut st, t, format!("{subject} acquired while held by thread {other}"));
        }
        st.held.entry(t).or_default().push((subject, false));
    }

    pub fn acquire_shared(&self, subject: Subject) {
        let t = current_thread();
        let mut st = self.state.lock();
        self.record(&mut st, t, subject, Action::AcquireShared);
        st.held.entry(t).or_default().push((subject, true));
    }

    fn remove(&self, subject: Subject, shared: bool, action: Action) {
        let t = current_thread();
        let mut st = self.state.lock();
        self.record(&mut st, t, subject, action);
        let held = st.held.entry(t).or_default();
        match held.iter().rposition(|h| *h == (subject, shared)) {
            Some(i) => {
                held.remove(i);
                if held.is_empty() {
                    st.held.remove(&t);
                }
                if !shared {
                    st.owner.remove(&subject);
                }
            }
            None => Self::violate(&mut st, t, format!("{subject} released but not held")),
        }
    }

    pub fn release(&self, subject: Subject) {
        self.remove(subject, false, Action::Release);
    }

    pub fn release_shared(&self, subject: Subject) {
        self.remove(subject, true, Action::ReleaseShared);
    }

    /// Records a modification of `subject`, which the caller must hold.
    pub fn mutate(&self, subject: Subject) {
        let t = current_thread();
        let mut st = self.state.lock();
        self.record(&mut st, t, subject, Action::Mutate);
        if st.owner.get(&subject) != Some(&t) {
            Self::violate(&mut st, t, format!("{subject} modified without its lock"));
        }
    }

    /// Checks that the calling thread holds nothing; records a violation
    /// otherwise.
    pub fn op_boundary(&self, what: &str) -> bool {
        let t = current_thread();
        let mut st = self.state.lock();
        match st.held.get(&t) {
            Some(h) if !h.is_empty() => {
                let list: Vec<String> = h.iter().map(|(s, _)| s.to_string()).collect();
                Self::violate(&mut st, t, format!("{what}: still holding {}", list.join(", ")));
                false
            }
            _ => true,
        }
    }

    /// Checks the coupling bound: inode locks held by the caller beyond the
    /// `pinned` ones must not exceed two.
    pub fn check_coupling(&self, pinned: usize) {
        let t = current_thread();
        let mut st = self.state.lock();
        let n = st
            .held
            .get(&t)
            .map_or(0, |h| h.iter().filter(|(s, _)| matches!(s, Subject::Inode(_))).count())
            .saturating_sub(pinned);
        st.peak_coupling = st.peak_coupling.max(n);
        if n > 2 {
            Self::violate(&mut st, t, format!("{n} inode locks held while coupling"));
        }
    }

    pub fn held_by(&self, thread: u64) -> Vec<Subject> {
        self.state.lock().held.get(&thread).map(|h| h.iter().map(|(s, _)| *s).collect()).unwrap_or_default()
    }

    pub fn held_current(&self) -> Vec<Subject> {
        self.held_by(current_thread())
    }

    pub fn assert_none_held(&self) -> Result<(), Violation> {
        let held = self.held_current();
        if held.is_empty() {
            Ok(())
        } else {
            let list: Vec<String> = held.iter().map(ToString::to_string).collect();
            Err(Violation {
                thread: current_thread(),
                seq: self.state.lock().seq,
                message: format!("holding {}", list.join(", ")),
            })
        }
    }

    /// Thread holding `subject` exclusively, if any.
    pub fn holder(&self, subject: Subject) -> Option<u64> {
        self.state.lock().owner.get(&subject).copied()
    }

    pub fn events(&self) -> Vec<Event> {
        self.state.lock().log.clone()
    }

    pub fn violations(&self) -> Vec<Violation> {
        self.state.lock().violations.clone()
    }

    pub fn report(&self) -> MonitorReport {
        let st = self.state.lock();
        let mut held: Vec<(u64, Vec<Subject>)> =
            st.held.iter().map(|(t, h)| (*t, h.iter().map(|(s, _)| *s).collect())).collect();
        held.sort();
        MonitorReport { events: st.seq, violations: st.violations.clone(), peak_coupling: st.peak_coupling, held }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn release_without_hold_is_flagged() {
        let m = LockMonitor::default();
        m.release(Subject::Inode(3));
        assert_eq!(m.violations().len(), 1);
        m.acquire(Subject::Inode(3));
        assert!(m.assert_none_held().is_err());
        m.mutate(Subject::Inode(3));
        m.mutate(Subject::Inode(4));
        assert_eq!(m.violations().len(), 2);
        m.release(Subject::Inode(3));
        assert!(m.assert_none_held().is_ok());
        assert_eq!(m.events().len(), 5);
    }
}
