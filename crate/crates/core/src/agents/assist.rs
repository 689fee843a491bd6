use std::fmt::Write;

use super::cache::CacheStore;
use super::client::{ModelClient, Role};
use super::compile::{compile_module, Attempt, GeneratedModule};
use super::config::DEFAULT_ATTEMPT_LIMIT;
use super::prompt::{resolve_rely, GenerationTask, Phase};
use super::AgentError;
use crate::depgraph::{build_graph_with, topo_order, GraphOptions};
use crate::spec::{parse_document_unchecked, serialize_spec, SpecDocument};

#[derive(Clone, Copy)]
pub struct Clients<'a> {
    pub codegen: &'a dyn ModelClient,
    pub speceval: &'a dyn ModelClient,
    pub specfine: &'a dyn ModelClient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssistOptions {
    pub max_rounds: u32,
    pub attempt_limit: u32,
}

impl Default for AssistOptions {
    fn default() -> Self {
        AssistOptions { max_rounds: 3, attempt_limit: DEFAULT_ATTEMPT_LIMIT }
    }
}

#[derive(Debug, Clone)]
pub struct AssistOutcome {
    /// Canonical text of the spec that compiled.
    pub refined_spec: String,
    pub code: Vec<GeneratedModule>,
    pub rounds: u32,
}

/// Prepends the diagnostics as a comment block, which the parser skips.
pub fn annotate(spec: &str, diagnostics: &[String]) -> String {
    let mut out = String::from("# debug log\n");
    for d in diagnostics {
        for (i, line) in d.lines().enumerate() {
            let _ = writeln!(out, "# {}{line}", if i == 0 { "- " } else { "  " });
        }
    }
    out.push_str(spec);
    out
}

fn parse(text: &str) -> Result<SpecDocument, String> {
    parse_document_unchecked(text).map_err(|e| e.to_string())
}

fn strip_fence(reply: &str) -> &str {
    let t = reply.trim();
    match t.strip_prefix("```") {
        Some(rest) => {
            let body = rest.split_once('\n').map_or("", |(_, b)| b);
            body.trim_end().strip_suffix("```").unwrap_or(body)
        }
        None => reply,
    }
}

enum RoundFailure {
    /// Reviewer findings the refinement step can act on.
    Findings(Vec<String>, Phase, Vec<Attempt>),
}

fn compile_all(
    doc: &SpecDocument,
    clients: Clients<'_>,
    opts: AssistOptions,
    cache: &CacheStore,
) -> Result<Result<Vec<GeneratedModule>, RoundFailure>, AgentError> {
    let graph = match build_graph_with(doc, GraphOptions { accept_first_provider: true }).and_then(|g| topo_order(&g)) {
        Ok(order) => order,
        Err(e) => return Ok(Err(RoundFailure::Findings(vec![e.to_string()], Phase::Functional, Vec::new()))),
    };
    let mut out = Vec::new();
    for name in graph {
        let m = doc.module(&name).expect("graph node is a module").clone();
        // Rely items with no provider in the draft are external interfaces;
        // their own declarations are the best context available.
        let mut task = match resolve_rely(doc, &m) {
            Ok(ctx) => GenerationTask::new(m, ctx),
            Err(AgentError::MissingRely(_)) => GenerationTask::standalone(m),
            Err(e) => return Err(e),
        };
        task.attempt_limit = opts.attempt_limit;
        match compile_module(&task, clients.codegen, clients.speceval, cache) {
            Ok(g) => out.push(g),
            Err(AgentError::AttemptLimitExceeded { phase, transcript, .. }) => {
                let mut findings = Vec::new();
                for a in transcript.iter().filter(|a| !a.verdict.pass) {
                    for f in &a.verdict.feedback {
                        let f = format!("{name} ({phase}): {f}");
                        if !findings.contains(&f) {
                            findings.push(f);
                        }
                    }
                }
                return Ok(Err(RoundFailure::Findings(findings, phase, transcript)));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Ok(out))
}

fn refine_prompt(spec: &str, findings: &[String]) -> String {
    let mut out = String::from(
        "[TASK] The specification below produced code that failed review. \
         Revise the specification so it resolves the findings. Reply with the full specification only.\n[SPEC]\n",
    );
    out.push_str(spec);
    out.push_str("[FINDINGS]\n");
    for f in findings {
        let _ = writeln!(out, "- {f}");
    }
    out
}

/// Compile, and on a failed review let the refinement client rewrite the
/// spec, for at most `opts.max_rounds` rounds. Failure returns the last spec
/// annotated with every diagnostic.
pub fn assist(
    draft: &str,
    clients: Clients<'_>,
    opts: AssistOptions,
    cache: &CacheStore,
) -> Result<AssistOutcome, AgentError> {
    let mut spec = serialize_spec(&parse(draft).map_err(AgentError::Reformat)?);
    let mut diagnostics = Vec::new();
    let mut last = (Phase::Functional, Vec::new());
    if opts.max_rounds == 0 {
        diagnostics.push("no refinement rounds allowed".to_string());
    }
    for round in 1..=opts.max_rounds {
        let doc = parse(&spec).map_err(AgentError::Reformat)?;
        let RoundFailure::Findings(findings, phase, transcript) = match compile_all(&doc, clients, opts, cache)? {
            Ok(code) => return Ok(AssistOutcome { refined_spec: spec, code, rounds: round }),
            Err(f) => f,
        };
        diagnostics.extend(findings.iter().map(|f| format!("round {round}: {f}")));
        last = (phase, transcript);
        if round == opts.max_rounds {
            break;
        }
        let reply = clients.specfine.complete(&refine_prompt(&spec, &findings), Role::Specfine)?;
        match parse(strip_fence(&reply)) {
            Ok(d) if !d.modules.is_empty() => spec = serialize_spec(&d),
            Ok(_) => diagnostics.push(format!("round {round}: refined spec has no modules; kept the previous one")),
            Err(e) => {
                diagnostics.push(format!("round {round}: refined spec does not parse ({e}); kept the previous one"))
            }
        }
    }
    Err(AgentError::AttemptLimitExceeded {
        phase: last.0,
        transcript: last.1,
        annotated_spec: Some(annotate(&spec, &diagnostics)),
    })
}
