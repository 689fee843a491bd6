//! Reference concurrent in-memory file system: lock-coupling operations,
//! a lock-discipline monitor, the dentry cache, trace runner and the
//! serial-equivalence explorer.

pub mod dcache;
pub mod explore;
pub mod monitor;
pub mod state;
pub mod trace;

pub use dcache::{fnv1a, Dcache, DcacheEntry, Qstr, DEFAULT_BUCKETS};
pub use explore::{explore, explore_all, seeded_scenarios, serial_outcomes, ExploreReport, Outcome, Scenario};
pub use monitor::{current_thread, Action, Event, LockMonitor, MonitorReport, Subject, Violation};
pub use state::{
    split_path, valid_name, FsError, FsState, Inode, InodeGuard, InodeKind, InodeState, SchedHook, SnapshotNode,
    TreeSnapshot, ROOT_INUM,
};
pub use trace::{parse_trace, run_trace, FsOp, LineResult, OpResult, TraceError, TraceLine, TraceReport};
