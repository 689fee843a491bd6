//! Well-formedness rules over a parsed document.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::types::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rule {
    DuplicateModule,
    DuplicateRely,
    DuplicateExport,
    DuplicateFunction,
    DuplicateParam,
    GuaranteeNotDefined,
    MissingPostCase,
    DuplicateCaseLabel,
    EmptyPredicate,
    UnresolvedSymbol,
    UnknownLockProtocol,
    UnresolvedLock,
    LockAssertionConflict,
    Level2NeedsIntent,
    Level3NeedsAlgorithm,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::DuplicateModule => "DUPLICATE_MODULE",
            Rule::DuplicateRely => "DUPLICATE_RELY",
            Rule::DuplicateExport => "DUPLICATE_EXPORT",
            Rule::DuplicateFunction => "DUPLICATE_FUNCTION",
            Rule::DuplicateParam => "DUPLICATE_PARAM",
            Rule::GuaranteeNotDefined => "GUARANTEE_NOT_DEFINED",
            Rule::MissingPostCase => "MISSING_POST_CASE",
            Rule::DuplicateCaseLabel => "DUPLICATE_CASE_LABEL",
            Rule::EmptyPredicate => "EMPTY_PREDICATE",
            Rule::UnresolvedSymbol => "UNRESOLVED_SYMBOL",
            Rule::UnknownLockProtocol => "UNKNOWN_LOCK_PROTOCOL",
            Rule::UnresolvedLock => "UNRESOLVED_LOCK",
            Rule::LockAssertionConflict => "LOCK_ASSERTION_CONFLICT",
            Rule::Level2NeedsIntent => "LEVEL2_NEEDS_INTENT",
            Rule::Level3NeedsAlgorithm => "LEVEL3_NEEDS_ALGORITHM",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub module: String,
    pub rule: Rule,
    pub message: String,
    /// Offending symbol, when the rule is about one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.module, self.rule, self.message)
    }
}

/// Identifiers written in call position, `name(`, inside free text.
pub fn called_symbols(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let preceded_ok = start == 0 || !(bytes[start - 1].is_ascii_alphanumeric() || bytes[start - 1] == b'.');
            if preceded_ok && i < bytes.len() && bytes[i] == b'(' {
                out.push(text[start..i].to_string());
            }
        } else {
            i += 1;
        }
    }
    out
}

/// Every name a function body may legitimately mention.
fn declared_names(m: &ModuleSpec) -> HashSet<&str> {
    let mut names: HashSet<&str> = HashSet::new();
    names.extend(m.rely.imported_types.iter().map(|t| t.name.as_str()));
    names.extend(m.rely.imported_globals.iter().map(|g| g.name.as_str()));
    names.extend(m.rely.imported_functions.iter().map(|s| s.name.as_str()));
    names.extend(m.guarantee.exported_types.iter().map(|t| t.name.as_str()));
    names.extend(m.guarantee.exported_globals.iter().map(|g| g.name.as_str()));
    names.extend(m.guarantee.exported_functions.iter().map(|s| s.name.as_str()));
    names.extend(m.local_types.iter().map(|t| t.name.as_str()));
    names.extend(m.functions.iter().map(|f| f.signature.name.as_str()));
    names
}

/// Symbols referenced by a function's contract text that are not declared.
pub fn unresolved_symbols(m: &ModuleSpec) -> Vec<(String, String)> {
    let declared = declared_names(m);
    let mut out = Vec::new();
    for f in &m.functions {
        let mut texts: Vec<&str> = Vec::new();
        texts.extend(f.pre.iter().map(|p| p.text.as_str()));
        texts.extend(f.invariants.iter().map(|p| p.text.as_str()));
        for c in &f.post {
            texts.push(&c.condition);
            texts.extend(c.outcomes.iter().map(|p| p.text.as_str()));
            if let Some(r) = &c.returns {
                texts.push(r);
            }
        }
        if let Some(steps) = &f.algorithm {
            texts.extend(steps.iter().map(String::as_str));
        }
        let params: HashSet<&str> = f.signature.params.iter().map(|p| p.name.as_str()).collect();
        let mut seen = BTreeSet::new();
        for t in texts {
            for sym in called_symbols(t) {
                if !declared.contains(sym.as_str()) && !params.contains(sym.as_str()) && seen.insert(sym.clone()) {
                    out.push((f.signature.name.clone(), sym));
                }
            }
        }
    }
    out
}

fn lock_subject_resolves(m: &ModuleSpec, f: &FunctionSpec, subject: &str) -> bool {
    let root = subject.split(['.', '-']).next().unwrap_or(subject);
    root == "result" || f.signature.params.iter().any(|p| p.name == root) || declared_names(m).contains(root)
}

pub fn check_document(doc: &SpecDocument) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for m in &doc.modules {
        *counts.entry(m.name.as_str()).or_default() += 1;
    }
    let mut reported = HashSet::new();
    for m in &doc.modules {
        if counts[m.name.as_str()] > 1 && reported.insert(m.name.as_str()) {
            diags.push(Diagnostic {
                module: m.name.clone(),
                rule: Rule::DuplicateModule,
                message: format!("module `{}` declared {} times", m.name, counts[m.name.as_str()]),
                symbol: None,
            });
        }
    }
    for m in &doc.modules {
        check_module(m, &mut diags);
    }
    diags
}

pub fn check_module(m: &ModuleSpec, diags: &mut Vec<Diagnostic>) {
    let mut push = |rule: Rule, message: String, symbol: Option<String>| {
        diags.push(Diagnostic { module: m.name.clone(), rule, message, symbol });
    };

    let mut rely_names = HashSet::new();
    for item in m.rely.items() {
        if !rely_names.insert(item.name().to_string()) {
            push(Rule::DuplicateRely, format!("`{}` imported more than once", item.name()), Some(item.name().into()));
        }
    }
    let mut export_names = HashSet::new();
    let exports = m
        .guarantee
        .exported_types
        .iter()
        .map(|t| &t.name)
        .chain(m.guarantee.exported_globals.iter().map(|g| &g.name))
        .chain(m.guarantee.exported_functions.iter().map(|s| &s.name));
    for n in exports {
        if !export_names.insert(n.clone()) {
            push(Rule::DuplicateExport, format!("`{n}` exported more than once"), Some(n.clone()));
        }
    }

    let sigs = m
        .rely
        .imported_functions
        .iter()
        .chain(&m.guarantee.exported_functions)
        .chain(m.functions.iter().map(|f| &f.signature));
    for s in sigs {
        let mut pn = HashSet::new();
        for p in &s.params {
            if !pn.insert(&p.name) {
                push(
                    Rule::DuplicateParam,
                    format!("parameter `{}` repeated in `{}`", p.name, s.name),
                    Some(p.name.clone()),
                );
            }
        }
    }

    let mut fnames = HashSet::new();
    for f in &m.functions {
        if !fnames.insert(&f.signature.name) {
            push(
                Rule::DuplicateFunction,
                format!("function `{}` specified more than once", f.signature.name),
                Some(f.signature.name.clone()),
            );
        }
    }

    for s in &m.guarantee.exported_functions {
        match m.function(&s.name) {
            Some(f) if f.signature.equivalent(s) => {}
            Some(_) => push(
                Rule::GuaranteeNotDefined,
                format!("exported `{s}` does not match its [SPEC] signature"),
                Some(s.name.clone()),
            ),
            None => push(
                Rule::GuaranteeNotDefined,
                format!("exported `{}` has no [SPEC] block", s.name),
                Some(s.name.clone()),
            ),
        }
    }

    for f in &m.functions {
        let name = &f.signature.name;
        if f.post.is_empty() {
            push(Rule::MissingPostCase, format!("`{name}` has no post-condition case"), Some(name.clone()));
        }
        let mut labels = HashSet::new();
        for c in &f.post {
            if !labels.insert(&c.label) {
                push(Rule::DuplicateCaseLabel, format!("`{name}` repeats `{}`", c.label), Some(name.clone()));
            }
        }
        let all_preds = f
            .pre
            .iter()
            .chain(&f.invariants)
            .chain(f.post.iter().flat_map(|c| c.outcomes.iter()))
            .chain(&m.module_invariants);
        for p in all_preds {
            if p.text.trim().is_empty() {
                push(Rule::EmptyPredicate, format!("empty predicate in `{name}`"), Some(name.clone()));
            }
        }
        if let Some(c) = &f.concurrency {
            let lists = std::iter::once(&c.lock_pre).chain(c.lock_post.iter().map(|p| &p.assertions));
            for list in lists {
                let none = list.iter().any(|a| a.state == LockState::NoneHeld);
                let only = list.iter().any(|a| a.state == LockState::OnlyThisHeld);
                if none && only {
                    push(
                        Rule::LockAssertionConflict,
                        format!("`{name}` combines none_held with only_this_held"),
                        Some(name.clone()),
                    );
                }
                for a in list.iter().filter(|a| !a.subject.is_empty()) {
                    if !lock_subject_resolves(m, f, &a.subject) {
                        push(
                            Rule::UnresolvedLock,
                            format!("lock subject `{}` in `{name}` is not declared", a.subject),
                            Some(a.subject.clone()),
                        );
                    }
                }
            }
        }
    }

    for p in &m.rely.imported_lock_protocols {
        if !m.rely.imported_functions.iter().any(|s| &s.name == p) {
            push(
                Rule::UnknownLockProtocol,
                format!("lock protocol `{p}` does not name an imported function"),
                Some(p.clone()),
            );
        }
    }

    for (func, sym) in unresolved_symbols(m) {
        push(
            Rule::UnresolvedSymbol,
            format!("`{sym}` used by `{func}` is not declared in RELY, GUARANTEE or TYPES"),
            Some(sym),
        );
    }

    match m.level {
        Level::L2 if !m.functions.iter().any(|f| f.intent.as_deref().is_some_and(|i| !i.trim().is_empty())) => {
            push(Rule::Level2NeedsIntent, "level-2 module needs an intent on at least one function".into(), None)
        }
        Level::L3 if !m.functions.iter().any(|f| f.algorithm.as_ref().is_some_and(|a| !a.is_empty())) => {
            push(Rule::Level3NeedsAlgorithm, "level-3 module needs an algorithm on at least one function".into(), None)
        }
        _ => {}
    }
}
