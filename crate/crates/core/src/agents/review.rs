use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::client::{ModelClient, Role};
use super::prompt::ReviewScope;
use super::AgentError;
use crate::spec::{render_concurrency, render_module, ModuleSpec};

pub const UNPARSEABLE: &str = "reviewer reply unparseable";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub feedback: Vec<String>,
    pub reviewer_model: String,
}

/// First non-blank line is `PASS` or `FAIL: <finding>`; each later `- ` line
/// is one more finding. Anything else is a failed review carrying the raw
/// reply, so a fail verdict never has empty feedback.
pub fn parse_verdict(reply: &str, reviewer_model: &str) -> Verdict {
    let mut lines = reply.lines().map(str::trim).filter(|l| !l.is_empty());
    let bullets = |rest: &mut dyn Iterator<Item = &str>| -> Vec<String> {
        rest.filter_map(|l| l.strip_prefix("- ")).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    };
    let verdict = |pass, feedback| Verdict { pass, feedback, reviewer_model: reviewer_model.to_string() };
    match lines.next() {
        Some("PASS") => verdict(true, bullets(&mut lines)),
        Some(first) if first.starts_with("FAIL:") => {
            let mut findings = Vec::new();
            let head = first["FAIL:".len()..].trim();
            if !head.is_empty() {
                findings.push(head.to_string());
            }
            findings.extend(bullets(&mut lines));
            if findings.is_empty() {
                findings.push("reviewer failed the code without a finding".into());
            }
            verdict(false, findings)
        }
        _ => verdict(false, vec![UNPARSEABLE.to_string(), reply.to_string()]),
    }
}

fn functional_view(module: &ModuleSpec) -> String {
    let mut m = module.clone();
    m.rely.imported_lock_protocols.clear();
    for f in &mut m.functions {
        f.concurrency = None;
    }
    render_module(&m)
}

pub fn review_prompt(code: &str, module: &ModuleSpec, scope: ReviewScope) -> String {
    let mut out = String::new();
    let scope_name = match scope {
        ReviewScope::Functional => "functional",
        ReviewScope::Concurrency => "concurrency",
        ReviewScope::Combined => "functional and concurrency",
    };
    let _ = writeln!(
        out,
        "[REVIEW] Check module `{}` against its {scope_name} specification.\n\
         Reply `PASS`, or `FAIL: <finding>` followed by one `- <finding>` line per further problem.",
        module.name
    );
    out.push_str("[SPECIFICATION]\n");
    match scope {
        ReviewScope::Functional => out.push_str(&functional_view(module)),
        ReviewScope::Concurrency => {
            for f in &module.functions {
                if let Some(c) = &f.concurrency {
                    render_concurrency(&mut out, &f.signature.name, c);
                }
            }
        }
        ReviewScope::Combined => out.push_str(&render_module(module)),
    }
    out.push_str("[CODE]\n");
    out.push_str(code);
    if !code.ends_with('\n') {
        out.push('\n');
    }
    out
}

/// Asks `reviewer` to check `code`. A module over its line budget gets an
/// advisory warning finding; that never turns a pass into a fail.
pub fn spec_eval(
    code: &str,
    module: &ModuleSpec,
    scope: ReviewScope,
    reviewer: &dyn ModelClient,
) -> Result<Verdict, AgentError> {
    if code.trim().is_empty() {
        return Ok(Verdict {
            pass: false,
            feedback: vec!["generated code is empty".into()],
            reviewer_model: reviewer.model_id().to_string(),
        });
    }
    let reply = reviewer.complete(&review_prompt(code, module, scope), Role::Speceval)?;
    let mut v = parse_verdict(&reply, reviewer.model_id());
    let loc = code.lines().filter(|l| !l.trim().is_empty()).count();
    if loc > module.loc_budget as usize {
        v.feedback.push(format!("warning: {loc} lines exceed loc_budget {}", module.loc_budget));
    }
    Ok(v)
}
