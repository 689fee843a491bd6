//! `.patch.gspec` reader and writer.
//!
//! ```text
//! [PATCH] extent
//! [NODE] common leaf
//! [CHANGE] ModifyType inode_management
//! type inode_data = struct inode_data { extents: extent_list; size: unsigned }
//! [NODE] inode_management root depends=common replaces=fn inode_read(...) -> int
//! [CHANGE] ReplaceFunction inode_management
//! [SPEC] fn inode_read(...) -> int
//! ...
//! ```

use std::fmt::Write;

use super::model::*;
use super::PatchError;
use crate::spec::{
    self, is_ident, parse_document_unchecked, parse_function_blocks, parse_interface_line, parse_signature,
    InterfaceLine, SpecError,
};

fn syntax(line: usize, expected: impl Into<String>) -> PatchError {
    PatchError::Syntax { line, expected: expected.into() }
}

fn from_spec(e: SpecError, offset: usize) -> PatchError {
    match e {
        SpecError::Syntax { line, expected } => PatchError::Syntax { line: line + offset, expected },
        other => PatchError::Spec(other),
    }
}

struct PendingChange {
    kind: String,
    target: String,
    line: usize,
    payload: Vec<(usize, String)>,
}

pub fn parse_patch(source: &str) -> Result<SpecPatch, PatchError> {
    let mut patch_id: Option<String> = None;
    let mut nodes: Vec<PatchNode> = Vec::new();
    let mut pending: Option<PendingChange> = None;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let text = raw.trim();
        let structural = text.starts_with("[PATCH]") || text.starts_with("[NODE]") || text.starts_with("[CHANGE]");
        if !structural {
            if let Some(p) = pending.as_mut() {
                p.payload.push((line_no, raw.to_string()));
                continue;
            }
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            return Err(syntax(line_no, "[PATCH], [NODE] or [CHANGE]"));
        }
        if let Some(p) = pending.take() {
            let node = nodes.last_mut().expect("a change belongs to a node");
            node.changes.push(build_change(p)?);
        }
        if let Some(rest) = text.strip_prefix("[PATCH]") {
            let id = rest.trim();
            if patch_id.is_some() || !nodes.is_empty() {
                return Err(syntax(line_no, "a single [PATCH] header before any node"));
            }
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(syntax(line_no, "patch id"));
            }
            patch_id = Some(id.to_string());
        } else if let Some(rest) = text.strip_prefix("[NODE]") {
            if patch_id.is_none() {
                return Err(syntax(line_no, "[PATCH] header first"));
            }
            nodes.push(parse_node_header(rest.trim(), line_no)?);
        } else if let Some(rest) = text.strip_prefix("[CHANGE]") {
            if nodes.is_empty() {
                return Err(syntax(line_no, "[NODE] before [CHANGE]"));
            }
            let mut words = rest.split_whitespace();
            let (kind, target) = match (words.next(), words.next(), words.next()) {
                (Some(k), Some(t), None) => (k, t),
                _ => return Err(syntax(line_no, "`[CHANGE] <Kind> <module>`")),
            };
            pending =
                Some(PendingChange { kind: kind.into(), target: target.into(), line: line_no, payload: Vec::new() });
        }
    }
    if let Some(p) = pending.take() {
        nodes.last_mut().expect("a change belongs to a node").changes.push(build_change(p)?);
    }
    let patch_id = patch_id.ok_or_else(|| syntax(1, "[PATCH] header"))?;
    Ok(SpecPatch { patch_id, nodes })
}

fn parse_node_header(rest: &str, line: usize) -> Result<PatchNode, PatchError> {
    let (head, replaces) = match rest.find("replaces=") {
        Some(i) => (&rest[..i], Some(rest[i + "replaces=".len()..].trim())),
        None => (rest, None),
    };
    let mut words = head.split_whitespace();
    let id = words.next().filter(|w| is_ident(w)).ok_or_else(|| syntax(line, "node id"))?;
    let kind =
        words.next().and_then(NodeKind::parse).ok_or_else(|| syntax(line, "node kind leaf|intermediate|root"))?;
    let mut depends_on = Vec::new();
    for w in words {
        let deps = w.strip_prefix("depends=").ok_or_else(|| syntax(line, "`depends=a,b` or `replaces=<signature>`"))?;
        for d in deps.split(',').filter(|d| !d.is_empty()) {
            if !is_ident(d) {
                return Err(syntax(line, "node id in depends list"));
            }
            depends_on.push(d.to_string());
        }
    }
    let replaces_guarantee = replaces.map(|s| parse_signature(s, line)).transpose().map_err(|e| from_spec(e, 0))?;
    Ok(PatchNode { id: id.to_string(), kind, depends_on, changes: Vec::new(), replaces_guarantee })
}

fn build_change(p: PendingChange) -> Result<ModuleChange, PatchError> {
    let first = p.payload.first().map(|(l, _)| *l).unwrap_or(p.line + 1);
    let text: String = p.payload.iter().map(|(_, l)| format!("{l}\n")).collect();
    let content: Vec<(usize, &str)> =
        p.payload.iter().map(|(l, t)| (*l, t.trim())).filter(|(_, t)| !t.is_empty() && !t.starts_with('#')).collect();
    let target = p.target;
    let single_function = || -> Result<_, PatchError> {
        let mut fs = parse_function_blocks(&text, first).map_err(|e| from_spec(e, 0))?;
        if fs.len() != 1 {
            return Err(syntax(p.line, "exactly one [SPEC] block"));
        }
        Ok(fs.remove(0))
    };
    let single_module = || -> Result<_, PatchError> {
        let mut doc = parse_document_unchecked(&text).map_err(|e| from_spec(e, first - 1))?;
        if doc.modules.len() != 1 || doc.modules[0].name != target {
            return Err(syntax(p.line, format!("exactly one [MODULE] named `{target}`")));
        }
        Ok(doc.modules.remove(0))
    };
    let interface = |allow_lock: bool| -> Result<Vec<InterfaceLine>, PatchError> {
        let mut items = Vec::new();
        for (l, t) in &content {
            let item = parse_interface_line(t, *l).map_err(|e| from_spec(e, 0))?;
            if matches!(item, InterfaceLine::LockProtocol(_)) && !allow_lock {
                return Err(syntax(*l, "lock_protocol only in AddRely"));
            }
            items.push(item);
        }
        if items.is_empty() {
            return Err(syntax(p.line, "at least one interface line"));
        }
        Ok(items)
    };
    Ok(match p.kind.as_str() {
        "AddModule" => ModuleChange::AddModule { module: single_module()? },
        "ReplaceModule" => ModuleChange::ReplaceModule { module: single_module()? },
        "RemoveModule" => {
            if let Some((l, _)) = content.first() {
                return Err(syntax(*l, "no payload for RemoveModule"));
            }
            ModuleChange::RemoveModule { target }
        }
        "AddFunction" => ModuleChange::AddFunction { function: single_function()?, target },
        "ReplaceFunction" => ModuleChange::ReplaceFunction { function: single_function()?, target },
        "AddGuarantee" => ModuleChange::AddGuarantee { items: interface(false)?, target },
        "AddRely" => ModuleChange::AddRely { items: interface(true)?, target },
        "ModifyType" => {
            let mut types = Vec::new();
            for item in interface(false)? {
                match item {
                    InterfaceLine::Type(t) => types.push(t),
                    _ => return Err(syntax(p.line, "only `type` lines in ModifyType")),
                }
            }
            ModuleChange::ModifyType { target, types }
        }
        _ => return Err(syntax(p.line, "change kind")),
    })
}

pub fn render_patch(patch: &SpecPatch) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[PATCH] {}", patch.patch_id);
    for n in &patch.nodes {
        let _ = write!(out, "[NODE] {} {}", n.id, n.kind.as_str());
        if !n.depends_on.is_empty() {
            let _ = write!(out, " depends={}", n.depends_on.join(","));
        }
        if let Some(sig) = &n.replaces_guarantee {
            let _ = write!(out, " replaces={sig}");
        }
        out.push('\n');
        for c in &n.changes {
            let _ = writeln!(out, "[CHANGE] {} {}", c.kind_name(), c.target());
            match c {
                ModuleChange::AddModule { module } | ModuleChange::ReplaceModule { module } => {
                    out.push_str(&spec::render_module(module))
                }
                ModuleChange::RemoveModule { .. } => {}
                ModuleChange::AddFunction { function, .. } | ModuleChange::ReplaceFunction { function, .. } => {
                    spec::render_function(&mut out, function);
                    if let Some(cc) = &function.concurrency {
                        spec::render_concurrency(&mut out, &function.signature.name, cc);
                    }
                }
                ModuleChange::AddGuarantee { items, .. } | ModuleChange::AddRely { items, .. } => {
                    for i in items {
                        let _ = writeln!(out, "{i}");
                    }
                }
                ModuleChange::ModifyType { types, .. } => {
                    for t in types {
                        let _ = writeln!(out, "{}", spec::render_type(t));
                    }
                }
            }
        }
    }
    out
}
