//! Simulated block device, benchmark workloads and metric reports.

pub mod disk;
pub mod report;
pub mod workload;

pub use disk::{CounterSnapshot, Run, SimDisk, DEFAULT_BLOCKS, DEFAULT_BLOCK_SIZE};
pub use report::{compare, Comparison, MetricsReport, Ratio, ReportError};
pub use workload::{run_workload, run_workload_on, WorkloadConfig, WorkloadKind, SMALL_FILE_MAX};
