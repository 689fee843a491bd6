//! DAG-structured specification patches: leaf, intermediate and root nodes,
//! planned leaves-first and applied atomically with a commit point at each
//! root.

mod apply;
mod diff;
mod model;
mod parse;
mod plan;

use thiserror::Error;

pub use apply::{apply, apply_changes, apply_in_order, ApplyOutcome, Manifest, ManifestChange, Substitution};
pub use diff::diff;
pub use model::{ModuleChange, NodeKind, PatchNode, SpecPatch};
pub use parse::{parse_patch, render_patch};
pub use plan::{is_valid_order, plan, validate, validate_against};

use crate::depgraph::EntailmentReport;
use crate::spec::{Diagnostic, SpecError};

pub const PATCH_EXTENSION: &str = "patch.gspec";

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("syntax error at line {line}: expected {expected}")]
    Syntax { line: usize, expected: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
    #[error("node `{node}` depends on unknown node `{missing}`")]
    DanglingDependency { node: String, missing: String },
    #[error("node cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("node `{node}` targets missing module `{module}`")]
    TargetMissing { node: String, module: String },
    #[error("node `{node}`: {message}")]
    InvalidChange { node: String, message: String },
    #[error("node `{node}` relies on `{item}` introduced by `{provider}` without depending on it")]
    UndeclaredDependency { node: String, item: String, provider: String },
    #[error("conflicting changes to `{function}` in `{module}` from unordered nodes")]
    ConflictingChange { module: String, function: String },
    #[error("commit point of root `{root}`: expected `{expected}`, found {found}")]
    CommitPointMismatch { root: String, expected: String, found: String },
    #[error("entailment broken after apply:\n{0}")]
    EntailmentBroken(EntailmentReport),
    #[error("result is not well-formed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    NotWellFormed(Vec<Diagnostic>),
}
