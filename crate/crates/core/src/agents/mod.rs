//! Generation pipeline: two-phase code generation with review and retry,
//! system validation and spec refinement, over a pluggable model client.

mod assist;
mod cache;
mod client;
mod compile;
mod config;
mod prompt;
mod review;
mod validate;

use thiserror::Error;

pub use assist::{annotate, assist, AssistOptions, AssistOutcome, Clients};
pub use cache::{cache_key, CacheEntry, CacheStore};
pub use client::{redact, HttpClient, MockClient, MockScript, ModelClient, Role, TranscriptEntry};
pub use compile::{compile_module, Attempt, GeneratedModule};
pub use config::{AgentConfig, ModelProfile, DEFAULT_ATTEMPT_LIMIT};
pub use prompt::{assemble_prompt, resolve_rely, GenerationTask, Phase, ReviewScope};
pub use review::{parse_verdict, review_prompt, spec_eval, Verdict, UNPARSEABLE};
pub use validate::{validate_system, ModuleReport, TestRun, ValidationReport};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("rely item `{0}` has no resolved definition")]
    MissingRely(String),
    #[error("{phase} phase reached its attempt limit")]
    AttemptLimitExceeded {
        phase: Phase,
        transcript: Vec<Attempt>,
        /// Set by the refinement loop: the last spec with its debug log.
        annotated_spec: Option<String>,
    },
    #[error("model client: {0}")]
    Client(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("test harness: {0}")]
    TestHarness(String),
    #[error("draft does not parse: {0}")]
    Reformat(String),
    #[error("{0}")]
    Spec(#[from] crate::spec::SpecError),
    #[error("cache: {0}")]
    Cache(String),
}

impl AgentError {
    /// True for failures of the surrounding environment rather than of the
    /// generated artifact.
    pub fn is_environmental(&self) -> bool {
        matches!(
            self,
            AgentError::Client(_) | AgentError::Config(_) | AgentError::TestHarness(_) | AgentError::Cache(_)
        )
    }
}
