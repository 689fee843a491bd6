use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use super::config::DEFAULT_ATTEMPT_LIMIT;
use super::AgentError;
use crate::spec::{
    parse_interface_line, render_concurrency, render_function, render_type, InterfaceLine, Mechanism, ModuleSpec,
    RelyItem, SpecDocument,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Functional,
    Concurrency,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Functional => "functional",
            Phase::Concurrency => "concurrency",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which part of a module spec a review checks against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewScope {
    Functional,
    Concurrency,
    Combined,
}

impl From<Phase> for ReviewScope {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Functional => ReviewScope::Functional,
            Phase::Concurrency => ReviewScope::Concurrency,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTask {
    pub module: ModuleSpec,
    /// Provider definitions of every rely item, one interface line each.
    pub resolved_rely: String,
    pub phase: Phase,
    pub attempt_limit: u32,
    /// Accepted functional code; required for the concurrency phase.
    pub phase1_code: Option<String>,
    /// Findings from earlier attempts of this phase, oldest first.
    pub feedback: Vec<String>,
}

impl GenerationTask {
    pub fn new(module: ModuleSpec, resolved_rely: String) -> Self {
        GenerationTask {
            module,
            resolved_rely,
            phase: Phase::Functional,
            attempt_limit: DEFAULT_ATTEMPT_LIMIT,
            phase1_code: None,
            feedback: Vec::new(),
        }
    }

    /// Resolves the rely clause against the providers in `doc`.
    pub fn from_document(doc: &SpecDocument, module: &str) -> Result<Self, AgentError> {
        let m = doc.module(module).ok_or_else(|| AgentError::Config(format!("no module `{module}`")))?;
        Ok(Self::new(m.clone(), resolve_rely(doc, m)?))
    }

    /// Uses the module's own rely declarations as context, for a module whose
    /// providers are not part of the document at hand.
    pub fn standalone(module: ModuleSpec) -> Self {
        let mut ctx = String::new();
        for t in &module.rely.imported_types {
            let _ = writeln!(ctx, "{}", render_type(t));
        }
        for g in &module.rely.imported_globals {
            let _ = writeln!(ctx, "global {}: {}", g.name, g.ty);
        }
        for s in &module.rely.imported_functions {
            let _ = writeln!(ctx, "{s}");
        }
        Self::new(module, ctx)
    }
}

/// One `# from <provider>` comment plus the provider's definition per rely item.
pub fn resolve_rely(doc: &SpecDocument, module: &ModuleSpec) -> Result<String, AgentError> {
    let mut out = String::new();
    for item in module.rely.items() {
        let provider = doc
            .modules
            .iter()
            .filter(|p| p.name != module.name)
            .find(|p| p.guarantee.provides(&item))
            .ok_or_else(|| AgentError::MissingRely(item.to_string()))?;
        let g = &provider.guarantee;
        let line = match &item {
            RelyItem::Type(n) => render_type(g.exported_types.iter().find(|t| &t.name == n).expect("provides")),
            RelyItem::Global(n) => {
                let gl = g.exported_globals.iter().find(|x| &x.name == n).expect("provides");
                format!("global {}: {}", gl.name, gl.ty)
            }
            RelyItem::Function(sig) => {
                g.exported_functions.iter().find(|s| s.equivalent(sig)).expect("provides").to_string()
            }
        };
        let _ = writeln!(out, "# from {}\n{line}", provider.name);
    }
    Ok(out)
}

fn check_resolved(task: &GenerationTask) -> Result<(), AgentError> {
    let lines: Vec<InterfaceLine> = task
        .resolved_rely
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| parse_interface_line(l, 0).ok())
        .collect();
    for item in task.module.rely.items() {
        let found = lines.iter().any(|l| match (l, &item) {
            (InterfaceLine::Type(t), RelyItem::Type(n)) => &t.name == n,
            (InterfaceLine::Global(g), RelyItem::Global(n)) => &g.name == n,
            (InterfaceLine::Function(s), RelyItem::Function(sig)) => s.equivalent(sig),
            _ => false,
        });
        if !found {
            return Err(AgentError::MissingRely(item.to_string()));
        }
    }
    Ok(())
}

fn mechanism_text(m: Mechanism) -> &'static str {
    match m {
        Mechanism::SharedReadSection => "read-side section: traverse shared structures without blocking writers",
        Mechanism::Exclusive => "exclusive lock: per-object mutual exclusion",
        Mechanism::AtomicCounter => "atomic counter: lock-free increment",
    }
}

/// Distinct mechanisms over all functions, outermost first: a read-side
/// section encloses entry locks, which enclose counter updates.
fn components(module: &ModuleSpec) -> Vec<Mechanism> {
    let used = |m: &Mechanism| {
        module.functions.iter().filter_map(|f| f.concurrency.as_ref()).any(|c| c.mechanisms.contains(m))
    };
    [Mechanism::SharedReadSection, Mechanism::Exclusive, Mechanism::AtomicCounter].into_iter().filter(used).collect()
}

fn feedback_section(out: &mut String, feedback: &[String]) {
    if feedback.is_empty() {
        return;
    }
    out.push_str("[FEEDBACK]\nEarlier attempts were rejected. Address every finding:\n");
    for f in feedback {
        let _ = writeln!(out, "- {f}");
    }
}

/// Builds the generation prompt for `task.phase`. Deterministic.
pub fn assemble_prompt(task: &GenerationTask) -> Result<String, AgentError> {
    check_resolved(task)?;
    let m = &task.module;
    let mut out = String::new();
    match task.phase {
        Phase::Functional => {
            let _ = writeln!(
                out,
                "[TASK] Implement module `{}` in C (phase 1 of 2: functional behaviour, single-threaded). \
                 Stay within {} lines. Reply with code only.",
                m.name, m.loc_budget
            );
            out.push_str("[RELY]\n");
            out.push_str(&task.resolved_rely);
            if !task.resolved_rely.is_empty() && !task.resolved_rely.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("[GUARANTEE]\n");
            for t in &m.guarantee.exported_types {
                let _ = writeln!(out, "{}", render_type(t));
            }
            for g in &m.guarantee.exported_globals {
                let _ = writeln!(out, "global {}: {}", g.name, g.ty);
            }
            for s in &m.guarantee.exported_functions {
                let _ = writeln!(out, "{s}");
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
                    let _ = writeln!(out, "- {}", p.text);
                }
            }
            out.push_str("[SPECIFICATION]\n");
            for f in &m.functions {
                render_function(&mut out, f);
            }
        }
        Phase::Concurrency => {
            let code = task
                .phase1_code
                .as_deref()
                .ok_or_else(|| AgentError::Config("concurrency phase needs the phase-1 code".into()))?;
            let _ = writeln!(
                out,
                "[TASK] Add synchronisation to module `{}` (phase 2 of 2). \
                 Keep the functional behaviour of the code below unchanged. Reply with code only.",
                m.name
            );
            out.push_str("[PHASE1 CODE]\n");
            out.push_str(code);
            if !code.ends_with('\n') {
                out.push('\n');
            }
            let comps = components(m);
            let specs: Vec<_> =
                m.functions.iter().filter_map(|f| f.concurrency.as_ref().map(|c| (&f.signature.name, c))).collect();
            if comps.is_empty() && specs.iter().all(|(_, c)| c.is_empty()) && m.rely.imported_lock_protocols.is_empty()
            {
                out.push_str("[CONCURRENCY]\nno locking required: return the code unchanged.\n");
            } else {
                if !m.rely.imported_lock_protocols.is_empty() {
                    out.push_str("[LOCK PROTOCOLS]\n");
                    for p in &m.rely.imported_lock_protocols {
                        let _ = writeln!(out, "- {p}");
                    }
                }
                if !comps.is_empty() {
                    out.push_str("[COMPONENTS]\n");
                    for (i, c) in comps.iter().enumerate() {
                        let _ = writeln!(out, "{}. {}", i + 1, mechanism_text(*c));
                    }
                }
                for (name, c) in specs {
                    render_concurrency(&mut out, name, c);
                }
            }
        }
    }
    feedback_section(&mut out, &task.feedback);
    Ok(out)
}
