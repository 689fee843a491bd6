//! Specification-driven file-system workbench.
//!
//! - [`spec`]: the multi-part specification language (functionality,
//!   modularity, concurrency).
//! - [`depgraph`]: rely/guarantee dependency graph and generation order.
//! - [`patch`]: DAG-structured specification patches.
//! - [`agents`]: two-phase generation with review and retry over a
//!   pluggable model client.
//! - [`fs`]: reference concurrent in-memory file system with a lock monitor.
//! - [`features`]: evolvable block-mapping and allocation feature layers.
//! - [`blockdev`]: simulated block device, workloads and I/O reports.
//! - [`cli`]: the `genfs` command line.

pub mod agents;
pub mod blockdev;
pub mod cli;
pub mod depgraph;
pub mod features;
pub mod fs;
pub mod patch;
pub mod spec;
