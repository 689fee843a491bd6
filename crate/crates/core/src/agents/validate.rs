use std::fmt::Write;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::client::ModelClient;
use super::compile::GeneratedModule;
use super::prompt::ReviewScope;
use super::review::{spec_eval, Verdict};
use super::AgentError;
use crate::spec::SpecDocument;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleReport {
    pub module: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRun {
    pub command: Vec<String>,
    /// None when the process was killed by a signal.
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub modules: Vec<ModuleReport>,
    pub tests: Option<TestRun>,
    pub pass: bool,
}

impl ValidationReport {
    /// CI-style summary, one line per module plus the test outcome.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.modules {
            let _ = writeln!(out, "review {}: {}", m.module, if m.verdict.pass { "PASS" } else { "FAIL" });
            for f in &m.verdict.feedback {
                let _ = writeln!(out, "  - {f}");
            }
        }
        if let Some(t) = &self.tests {
            let code = t.exit_code.map_or("signal".to_string(), |c| c.to_string());
            let _ = writeln!(out, "tests `{}`: exit {code}", t.command.join(" "));
            if t.exit_code != Some(0) {
                for l in t.stdout.lines().chain(t.stderr.lines()) {
                    let _ = writeln!(out, "  | {l}");
                }
            }
        }
        let _ = writeln!(out, "overall: {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

/// Reviews every module against its whole spec, then runs `test_cmd`
/// (program plus arguments). No short-circuit: every module is reviewed
/// and the tests run even after a failed review.
pub fn validate_system(
    modules: &[GeneratedModule],
    doc: &SpecDocument,
    test_cmd: Option<&[String]>,
    reviewer: &dyn ModelClient,
) -> Result<ValidationReport, AgentError> {
    let mut reports = Vec::with_capacity(modules.len());
    for g in modules {
        let verdict = match doc.module(&g.module) {
            Some(spec) => spec_eval(&g.final_code, spec, ReviewScope::Combined, reviewer)?,
            None => Verdict {
                pass: false,
                feedback: vec![format!("module `{}` is not in the document", g.module)],
                reviewer_model: reviewer.model_id().to_string(),
            },
        };
        reports.push(ModuleReport { module: g.module.clone(), verdict });
    }
    let tests = match test_cmd {
        Some([prog, args @ ..]) => {
            let out = Command::new(prog)
                .args(args)
                .output()
                .map_err(|e| AgentError::TestHarness(format!("cannot run `{prog}`: {e}")))?;
            Some(TestRun {
                command: test_cmd.unwrap_or_default().to_vec(),
                exit_code: out.status.code(),
                stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            })
        }
        Some([]) => return Err(AgentError::TestHarness("empty test command".into())),
        None => None,
    };
    let pass = reports.iter().all(|r| r.verdict.pass) && tests.as_ref().is_none_or(|t| t.exit_code == Some(0));
    Ok(ValidationReport { modules: reports, tests, pass })
}
