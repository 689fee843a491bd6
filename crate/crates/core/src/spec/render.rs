//! Canonical text rendering. Output is deterministic and re-parses to an
//! equal document.

use std::fmt::Write;

use super::parse::InterfaceLine;
use super::types::*;

fn predicate(p: &Predicate) -> String {
    match p.tag {
        Some(tag) => format!("[{}] {}", tag.as_str(), p.text),
        None => p.text.clone(),
    }
}

pub fn render_type(t: &TypeDecl) -> String {
    format!("type {} = {}", t.name, t.definition)
}

pub fn render_global(g: &GlobalDecl) -> String {
    format!("global {}: {}", g.name, g.ty)
}

impl std::fmt::Display for InterfaceLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InterfaceLine::Type(t) => f.write_str(&render_type(t)),
            InterfaceLine::Global(g) => f.write_str(&render_global(g)),
            InterfaceLine::Function(s) => write!(f, "{s}"),
            InterfaceLine::LockProtocol(p) => write!(f, "lock_protocol {p}"),
        }
    }
}

pub fn render_rely(out: &mut String, rely: &RelyClause) {
    for t in &rely.imported_types {
        let _ = writeln!(out, "{}", render_type(t));
    }
    for g in &rely.imported_globals {
        let _ = writeln!(out, "{}", render_global(g));
    }
    for s in &rely.imported_functions {
        let _ = writeln!(out, "{s}");
    }
    for p in &rely.imported_lock_protocols {
        let _ = writeln!(out, "lock_protocol {p}");
    }
}

pub fn render_guarantee(out: &mut String, g: &GuaranteeClause) {
    for t in &g.exported_types {
        let _ = writeln!(out, "{}", render_type(t));
    }
    for gl in &g.exported_globals {
        let _ = writeln!(out, "{}", render_global(gl));
    }
    for s in &g.exported_functions {
        let _ = writeln!(out, "{s}");
    }
}

/// The `[SPEC]` block of one function, without its concurrency part.
pub fn render_function(out: &mut String, f: &FunctionSpec) {
    let _ = writeln!(out, "[SPEC] {}", f.signature);
    if !f.pre.is_empty() {
        out.push_str("Pre-condition:\n");
        for p in &f.pre {
            let _ = writeln!(out, "  - {}", predicate(p));
        }
    }
    if !f.post.is_empty() {
        out.push_str("Post-condition:\n");
        for case in &f.post {
            if case.condition.is_empty() {
                let _ = writeln!(out, "  {}", case.label);
            } else {
                let _ = writeln!(out, "  {}: {}", case.label, case.condition);
            }
            for o in &case.outcomes {
                let _ = writeln!(out, "    - {}", predicate(o));
            }
            if let Some(r) = &case.returns {
                let _ = writeln!(out, "    - Return {r}");
            }
        }
    }
    if !f.invariants.is_empty() {
        out.push_str("Invariant:\n");
        for p in &f.invariants {
            let _ = writeln!(out, "  - {}", predicate(p));
        }
    }
    if let Some(steps) = &f.algorithm {
        out.push_str("Algorithm:\n");
        for (i, s) in steps.iter().enumerate() {
            let _ = writeln!(out, "  {}. {}", i + 1, s);
        }
    }
    if let Some(intent) = &f.intent {
        let _ = writeln!(out, "Intent: {intent}");
    }
}

fn lock_list(list: &[LockAssertion]) -> String {
    list.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub fn render_concurrency(out: &mut String, name: &str, c: &ConcurrencySpec) {
    let _ = writeln!(out, "[CONCURRENCY] {name}");
    if !c.mechanisms.is_empty() {
        let ms: Vec<_> = c.mechanisms.iter().map(|m| m.as_str()).collect();
        let _ = writeln!(out, "Mechanisms: {}", ms.join(", "));
    }
    if !c.lock_pre.is_empty() {
        out.push_str("Pre-condition:\n");
        for a in &c.lock_pre {
            let _ = writeln!(out, "  - {a}");
        }
    }
    if !c.lock_post.is_empty() {
        out.push_str("Post-condition:\n");
        for case in &c.lock_post {
            if case.condition == "always" {
                let _ = writeln!(out, "  - always: {}", lock_list(&case.assertions));
            } else {
                let _ = writeln!(out, "  - when {}: {}", case.condition, lock_list(&case.assertions));
            }
        }
    }
    if !c.algorithm.is_empty() {
        out.push_str("Algorithm:\n");
        for (i, s) in c.algorithm.iter().enumerate() {
            let _ = writeln!(out, "  {}. {}", i + 1, s);
        }
    }
}

pub fn render_module(m: &ModuleSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[MODULE] {} level={} loc_budget={}", m.name, m.level.number(), m.loc_budget);
    if !m.rely.is_empty() {
        out.push_str("[RELY]\n");
        render_rely(&mut out, &m.rely);
    }
    if !m.guarantee.is_empty() {
        out.push_str("[GUARANTEE]\n");
        render_guarantee(&mut out, &m.guarantee);
    }
    if !m.local_types.is_empty() {
        out.push_str("[TYPES]\n");
        for t in &m.local_types {
            let _ = writeln!(out, "{}", render_type(t));
        }
    }
    if !m.module_invariants.is_empty() {
        out.push_str("[INVARIANTS]\n");
        for p in &m.module_invariants {
            let _ = writeln!(out, "- {}", predicate(p));
        }
    }
    for f in &m.functions {
        render_function(&mut out, f);
    }
    for f in &m.functions {
        if let Some(c) = &f.concurrency {
            render_concurrency(&mut out, &f.signature.name, c);
        }
    }
    out
}

pub fn render_document(doc: &SpecDocument) -> String {
    let mut out = String::new();
    if !doc.version_id.is_empty() {
        let _ = writeln!(out, "[DOCUMENT] version={}", doc.version_id);
    }
    for (i, m) in doc.modules.iter().enumerate() {
        if i > 0 || !doc.version_id.is_empty() {
            out.push('\n');
        }
        out.push_str(&render_module(m));
    }
    out
}
