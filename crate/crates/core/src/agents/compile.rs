use serde::{Deserialize, Serialize};

use super::cache::{cache_key, CacheEntry, CacheStore};
use super::client::{ModelClient, Role};
use super::prompt::{assemble_prompt, GenerationTask, Phase};
use super::review::{spec_eval, Verdict};
use super::AgentError;
use crate::spec::render_module;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub phase: Phase,
    pub number: u32,
    pub prompt: String,
    pub code: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedModule {
    pub module: String,
    pub phase1_code: String,
    pub final_code: String,
    /// Attempts spent per phase; zero for a phase served from the cache.
    pub attempts_used: (u32, u32),
    pub transcript: Vec<Attempt>,
    pub cache_hits: (bool, bool),
}

/// Strips one surrounding markdown code fence, if the reply has one.
fn extract_code(reply: &str) -> String {
    let t = reply.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = rest.split_once('\n').map_or("", |(_, b)| b);
        let body = body.trim_end().strip_suffix("```").unwrap_or(body);
        return body.trim_end().to_string() + "\n";
    }
    reply.to_string()
}

struct PhaseResult {
    code: String,
    attempts: Vec<Attempt>,
    hit: bool,
}

fn run_phase(
    task: &GenerationTask,
    codegen: &dyn ModelClient,
    reviewer: &dyn ModelClient,
    cache: &CacheStore,
) -> Result<PhaseResult, AgentError> {
    let key = cache_key(&render_module(&task.module), &task.resolved_rely, codegen.model_id(), task.phase);
    if let Some(hit) = cache.get(&key) {
        return Ok(PhaseResult { code: hit.code, attempts: hit.transcript, hit: true });
    }
    let mut task = task.clone();
    task.feedback.clear();
    let mut attempts = Vec::new();
    for number in 1..=task.attempt_limit.max(1) {
        let prompt = assemble_prompt(&task)?;
        let code = extract_code(&codegen.complete(&prompt, Role::Codegen)?);
        let verdict = spec_eval(&code, &task.module, task.phase.into(), reviewer)?;
        let pass = verdict.pass;
        if !pass {
            for f in &verdict.feedback {
                if !task.feedback.contains(f) {
                    task.feedback.push(f.clone());
                }
            }
        }
        attempts.push(Attempt { phase: task.phase, number, prompt, code: code.clone(), verdict });
        if pass {
            cache.put(
                &key,
                CacheEntry {
                    module: task.module.name.clone(),
                    phase: task.phase,
                    code: code.clone(),
                    transcript: attempts.clone(),
                },
            )?;
            return Ok(PhaseResult { code, attempts, hit: false });
        }
    }
    Err(AgentError::AttemptLimitExceeded { phase: task.phase, transcript: attempts, annotated_spec: None })
}

/// Functional phase to a passing review, then the concurrency phase on top
/// of the accepted code. Each phase retries with accumulated feedback up to
/// `task.attempt_limit`; `task.phase` and `task.feedback` are ignored.
pub fn compile_module(
    task: &GenerationTask,
    codegen: &dyn ModelClient,
    reviewer: &dyn ModelClient,
    cache: &CacheStore,
) -> Result<GeneratedModule, AgentError> {
    let mut t = task.clone();
    t.phase = Phase::Functional;
    t.phase1_code = None;
    let p1 = run_phase(&t, codegen, reviewer, cache)?;
    t.phase = Phase::Concurrency;
    t.phase1_code = Some(p1.code.clone());
    let p2 = run_phase(&t, codegen, reviewer, cache).map_err(|e| match e {
        AgentError::AttemptLimitExceeded { phase, transcript, annotated_spec } => {
            let mut all = p1.attempts.clone();
            all.extend(transcript);
            AgentError::AttemptLimitExceeded { phase, transcript: all, annotated_spec }
        }
        other => other,
    })?;
    let used = |r: &PhaseResult| if r.hit { 0 } else { r.attempts.len() as u32 };
    let mut transcript = p1.attempts.clone();
    transcript.extend(p2.attempts.iter().cloned());
    Ok(GeneratedModule {
        module: task.module.name.clone(),
        phase1_code: p1.code.clone(),
        final_code: p2.code.clone(),
        attempts_used: (used(&p1), used(&p2)),
        transcript,
        cache_hits: (p1.hit, p2.hit),
    })
}
