//! Structural validation and node ordering.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use super::model::*;
use super::PatchError;
use crate::spec::{InterfaceLine, SpecDocument};

/// Transitive dependencies of every node. Assumes ids resolve and the graph
/// is acyclic.
pub(crate) fn ancestors(patch: &SpecPatch) -> BTreeMap<&str, BTreeSet<&str>> {
    fn visit<'a>(
        id: &'a str,
        patch: &'a SpecPatch,
        memo: &mut BTreeMap<&'a str, BTreeSet<&'a str>>,
    ) -> BTreeSet<&'a str> {
        if let Some(s) = memo.get(id) {
            return s.clone();
        }
        let mut out = BTreeSet::new();
        if let Some(n) = patch.node(id) {
            for d in &n.depends_on {
                out.insert(d.as_str());
                out.extend(visit(d, patch, memo));
            }
        }
        memo.insert(id, out.clone());
        out
    }
    let mut memo = BTreeMap::new();
    for n in &patch.nodes {
        visit(&n.id, patch, &mut memo);
    }
    memo
}

fn find_cycle(patch: &SpecPatch) -> Option<Vec<String>> {
    let mut color: BTreeMap<&str, u8> = patch.nodes.iter().map(|n| (n.id.as_str(), 0)).collect();
    fn dfs<'a>(
        id: &'a str,
        patch: &'a SpecPatch,
        color: &mut BTreeMap<&'a str, u8>,
        path: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        color.insert(id, 1);
        path.push(id);
        let node = patch.node(id).expect("ids resolve");
        for d in &node.depends_on {
            match color[d.as_str()] {
                0 => {
                    if let Some(c) = dfs(d, patch, color, path) {
                        return Some(c);
                    }
                }
                1 => {
                    let pos = path.iter().position(|p| p == d).expect("on stack");
                    let mut c: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                    c.push(d.clone());
                    return Some(c);
                }
                _ => {}
            }
        }
        path.pop();
        color.insert(id, 2);
        None
    }
    let ids: Vec<&str> = color.keys().copied().collect();
    for id in ids {
        if color[id] == 0 {
            if let Some(c) = dfs(id, patch, &mut color, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

/// Patch invariants that do not need the base document.
pub fn validate(patch: &SpecPatch) -> Result<(), PatchError> {
    if patch.nodes.is_empty() {
        return Err(PatchError::InvalidPatch("patch has no nodes".into()));
    }
    let mut ids = BTreeSet::new();
    for n in &patch.nodes {
        if !ids.insert(n.id.as_str()) {
            return Err(PatchError::InvalidPatch(format!("duplicate node id `{}`", n.id)));
        }
    }
    for n in &patch.nodes {
        for d in &n.depends_on {
            if !ids.contains(d.as_str()) {
                return Err(PatchError::DanglingDependency { node: n.id.clone(), missing: d.clone() });
            }
        }
    }
    if let Some(c) = find_cycle(patch) {
        return Err(PatchError::CycleDetected(c));
    }
    if !patch.nodes.iter().any(|n| n.kind == NodeKind::Root) {
        return Err(PatchError::InvalidPatch("patch has no root node".into()));
    }
    for n in &patch.nodes {
        match n.kind {
            NodeKind::Leaf if !n.depends_on.is_empty() => {
                return Err(PatchError::InvalidPatch(format!("leaf `{}` has dependencies", n.id)))
            }
            NodeKind::Intermediate | NodeKind::Root if n.depends_on.is_empty() => {
                return Err(PatchError::InvalidPatch(format!("{} `{}` depends on nothing", n.kind.as_str(), n.id)))
            }
            _ => {}
        }
        match (n.kind, &n.replaces_guarantee) {
            (NodeKind::Root, None) => return Err(PatchError::InvalidPatch(format!("root `{}` lacks replaces=", n.id))),
            (NodeKind::Leaf | NodeKind::Intermediate, Some(_)) => {
                return Err(PatchError::InvalidPatch(format!("only roots may declare replaces= (`{}`)", n.id)))
            }
            _ => {}
        }
    }
    check_conflicts(patch)
}

/// Keys a node writes: `(module, item)`; `*` stands for the whole module.
fn write_keys(n: &PatchNode) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for c in &n.changes {
        let m = c.target().to_string();
        match c {
            ModuleChange::AddFunction { function, .. } | ModuleChange::ReplaceFunction { function, .. } => {
                out.push((m, function.signature.name.clone()))
            }
            ModuleChange::ModifyType { types, .. } => {
                out.extend(types.iter().map(|t| (m.clone(), format!("type {}", t.name))))
            }
            ModuleChange::AddModule { .. } | ModuleChange::ReplaceModule { .. } | ModuleChange::RemoveModule { .. } => {
                out.push((m, "*".into()))
            }
            ModuleChange::AddGuarantee { .. } | ModuleChange::AddRely { .. } => {}
        }
    }
    out
}

fn check_conflicts(patch: &SpecPatch) -> Result<(), PatchError> {
    let anc = ancestors(patch);
    let keys: Vec<_> = patch.nodes.iter().map(write_keys).collect();
    for (i, a) in patch.nodes.iter().enumerate() {
        for (j, b) in patch.nodes.iter().enumerate().skip(i + 1) {
            if anc[a.id.as_str()].contains(b.id.as_str()) || anc[b.id.as_str()].contains(a.id.as_str()) {
                continue;
            }
            for (m1, k1) in &keys[i] {
                for (m2, k2) in &keys[j] {
                    if m1 == m2 && (k1 == k2 || k1 == "*" || k2 == "*") {
                        let function = if k1 == "*" { k2.clone() } else { k1.clone() };
                        return Err(PatchError::ConflictingChange { module: m1.clone(), function });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Invariants that need the base: targets exist, roots name an existing
/// export, and new guarantees are only relied on by dependent nodes.
pub fn validate_against(patch: &SpecPatch, base: &SpecDocument) -> Result<(), PatchError> {
    validate(patch)?;
    let added: BTreeSet<&str> = patch
        .nodes
        .iter()
        .flat_map(|n| &n.changes)
        .filter(|c| matches!(c, ModuleChange::AddModule { .. }))
        .map(|c| c.target())
        .collect();
    for n in &patch.nodes {
        for c in &n.changes {
            let t = c.target();
            match c {
                ModuleChange::AddModule { .. } => {
                    if base.module(t).is_some() {
                        return Err(PatchError::InvalidChange {
                            node: n.id.clone(),
                            message: format!("module `{t}` already exists"),
                        });
                    }
                }
                _ if base.module(t).is_none() && !added.contains(t) => {
                    return Err(PatchError::TargetMissing { node: n.id.clone(), module: t.to_string() });
                }
                _ => {}
            }
        }
        if let Some(sig) = &n.replaces_guarantee {
            let exported =
                base.modules.iter().any(|m| m.guarantee.exported_functions.iter().any(|s| s.equivalent(sig)));
            if !exported {
                return Err(PatchError::CommitPointMismatch {
                    root: n.id.clone(),
                    expected: sig.to_string(),
                    found: "no equivalent export in the base document".into(),
                });
            }
        }
    }

    // names newly guaranteed by each node (absent from the base exports)
    let base_has = |item: &InterfaceLine| {
        base.modules.iter().any(|m| match item {
            InterfaceLine::Type(t) => m.guarantee.exported_types.iter().any(|x| x.name == t.name),
            InterfaceLine::Global(g) => m.guarantee.exported_globals.iter().any(|x| x.name == g.name),
            InterfaceLine::Function(s) => m.guarantee.exported_functions.iter().any(|x| x.equivalent(s)),
            InterfaceLine::LockProtocol(_) => true,
        })
    };
    let mut provided: BTreeMap<String, &str> = BTreeMap::new();
    for n in &patch.nodes {
        for c in &n.changes {
            let items: Vec<InterfaceLine> = match c {
                ModuleChange::AddGuarantee { items, .. } => items.clone(),
                ModuleChange::AddModule { module } | ModuleChange::ReplaceModule { module } => guarantee_lines(module),
                _ => Vec::new(),
            };
            for i in items.iter().filter(|i| !base_has(i)) {
                provided.insert(line_name(i).to_string(), n.id.as_str());
            }
        }
    }
    let anc = ancestors(patch);
    for n in &patch.nodes {
        for c in &n.changes {
            let items: Vec<InterfaceLine> = match c {
                ModuleChange::AddRely { items, .. } => items.clone(),
                ModuleChange::AddModule { module } | ModuleChange::ReplaceModule { module } => rely_lines(module),
                _ => Vec::new(),
            };
            for i in &items {
                if matches!(i, InterfaceLine::LockProtocol(_)) {
                    continue;
                }
                if let Some(&p) = provided.get(line_name(i)) {
                    if p != n.id && !anc[n.id.as_str()].contains(p) {
                        return Err(PatchError::UndeclaredDependency {
                            node: n.id.clone(),
                            item: line_name(i).to_string(),
                            provider: p.to_string(),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn line_name(i: &InterfaceLine) -> &str {
    match i {
        InterfaceLine::Type(t) => &t.name,
        InterfaceLine::Global(g) => &g.name,
        InterfaceLine::Function(s) => &s.name,
        InterfaceLine::LockProtocol(p) => p,
    }
}

fn guarantee_lines(m: &crate::spec::ModuleSpec) -> Vec<InterfaceLine> {
    let g = &m.guarantee;
    g.exported_types
        .iter()
        .cloned()
        .map(InterfaceLine::Type)
        .chain(g.exported_globals.iter().cloned().map(InterfaceLine::Global))
        .chain(g.exported_functions.iter().cloned().map(InterfaceLine::Function))
        .collect()
}

fn rely_lines(m: &crate::spec::ModuleSpec) -> Vec<InterfaceLine> {
    let r = &m.rely;
    r.imported_types
        .iter()
        .cloned()
        .map(InterfaceLine::Type)
        .chain(r.imported_globals.iter().cloned().map(InterfaceLine::Global))
        .chain(r.imported_functions.iter().cloned().map(InterfaceLine::Function))
        .collect()
}

/// Leaves first, each node after its dependencies; among ready nodes the
/// lower kind (leaf < intermediate < root), then the smaller id, goes first.
pub fn plan(patch: &SpecPatch, base: &SpecDocument) -> Result<Vec<String>, PatchError> {
    validate_against(patch, base)?;
    Ok(order(patch))
}

pub(crate) fn order(patch: &SpecPatch) -> Vec<String> {
    let mut pending: BTreeMap<&str, BTreeSet<&str>> =
        patch.nodes.iter().map(|n| (n.id.as_str(), n.depends_on.iter().map(String::as_str).collect())).collect();
    let kind: BTreeMap<&str, NodeKind> = patch.nodes.iter().map(|n| (n.id.as_str(), n.kind)).collect();
    let mut ready: BinaryHeap<Reverse<(NodeKind, &str)>> =
        pending.iter().filter(|(_, d)| d.is_empty()).map(|(id, _)| Reverse((kind[id], *id))).collect();
    let mut out = Vec::new();
    while let Some(Reverse((_, id))) = ready.pop() {
        out.push(id.to_string());
        pending.remove(id);
        for (other, deps) in pending.iter_mut() {
            if deps.remove(id) && deps.is_empty() {
                ready.push(Reverse((kind[other], *other)));
            }
        }
    }
    out
}

/// True if `candidate` lists every node once, each after its dependencies.
pub fn is_valid_order(patch: &SpecPatch, candidate: &[String]) -> bool {
    if candidate.len() != patch.nodes.len() {
        return false;
    }
    let pos: BTreeMap<&str, usize> = candidate.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if pos.len() != candidate.len() {
        return false;
    }
    patch.nodes.iter().all(|n| {
        pos.get(n.id.as_str())
            .is_some_and(|&p| n.depends_on.iter().all(|d| pos.get(d.as_str()).is_some_and(|&q| q < p)))
    })
}
