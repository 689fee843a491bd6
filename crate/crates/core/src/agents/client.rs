use std::fmt;
use std::path::Path;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::ModelProfile;
use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Codegen,
    Speceval,
    Specfine,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Codegen => "codegen",
            Role::Speceval => "speceval",
            Role::Specfine => "specfine",
        }
    }

    fn system_prompt(self) -> &'static str {
        match self {
            Role::Codegen => "You write C implementations from module specifications. Reply with code only.",
            Role::Speceval => {
                "You review code against a specification. First line `PASS` or `FAIL: <finding>`, then one `- ` bullet per further finding."
            }
            Role::Specfine => "You repair specifications using reviewer feedback. Reply with the full revised specification only.",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub trait ModelClient: Send + Sync {
    fn complete(&self, prompt: &str, role: Role) -> Result<String, AgentError>;
    fn model_id(&self) -> &str;
}

/// Replies per role, consumed in order. Once a queue is down to its last
/// reply that reply repeats, so `["FAIL: x"]` means "always fail".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default = "mock_id")]
    pub model_id: String,
    #[serde(default)]
    pub codegen: Vec<String>,
    #[serde(default)]
    pub speceval: Vec<String>,
    #[serde(default)]
    pub specfine: Vec<String>,
}

fn mock_id() -> String {
    "mock".into()
}

/// Scripted client. Deterministic: the reply depends only on the script and
/// how many calls of the same role came before.
pub struct MockClient {
    script: MockScript,
    calls: Mutex<Vec<(Role, String)>>,
}

impl MockClient {
    pub fn new(script: MockScript) -> Self {
        MockClient { script, calls: Mutex::new(Vec::new()) }
    }

    pub fn from_file(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&text).map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().len()
    }

    /// Every prompt received so far, with its role.
    pub fn calls(&self) -> Vec<(Role, String)> {
        self.calls.lock().clone()
    }

    pub fn prompts(&self, role: Role) -> Vec<String> {
        self.calls.lock().iter().filter(|(r, _)| *r == role).map(|(_, p)| p.clone()).collect()
    }
}

impl ModelClient for MockClient {
    fn complete(&self, prompt: &str, role: Role) -> Result<String, AgentError> {
        let mut calls = self.calls.lock();
        let k = calls.iter().filter(|(r, _)| *r == role).count();
        calls.push((role, prompt.to_string()));
        let queue = match role {
            Role::Codegen => &self.script.codegen,
            Role::Speceval => &self.script.speceval,
            Role::Specfine => &self.script.specfine,
        };
        queue
            .get(k)
            .or(queue.last())
            .cloned()
            .ok_or_else(|| AgentError::Client(format!("mock script has no {role} replies")))
    }

    fn model_id(&self) -> &str {
        &self.script.model_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub request: String,
    pub response: String,
}

/// Replaces every occurrence of `secret` in `text`.
pub fn redact(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "[REDACTED]")
    }
}

/// Chat-completions style HTTP client. Request and response bodies are kept
/// in a transcript with the credential scrubbed.
pub struct HttpClient {
    profile: ModelProfile,
    key: String,
    agent: ureq::Agent,
    transcript: Mutex<Vec<TranscriptEntry>>,
}

impl HttpClient {
    pub fn from_profile(name: &str, profile: &ModelProfile) -> Result<Self, AgentError> {
        let key = std::env::var(&profile.api_key_env).map_err(|_| {
            AgentError::Config(format!("profile `{name}`: credential variable {} is not set", profile.api_key_env))
        })?;
        let timeout = Duration::from_secs(profile.timeout_secs.unwrap_or(120));
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build();
        Ok(HttpClient {
            profile: profile.clone(),
            key,
            agent: ureq::Agent::new_with_config(config),
            transcript: Mutex::new(Vec::new()),
        })
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.lock().clone()
    }

    fn scrub(&self, s: &str) -> String {
        redact(s, &self.key)
    }
}

impl ModelClient for HttpClient {
    fn complete(&self, prompt: &str, role: Role) -> Result<String, AgentError> {
        let body = json!({
            "model": self.profile.model_id,
            "messages": [
                {"role": "system", "content": role.system_prompt()},
                {"role": "user", "content": prompt},
            ],
        });
        let mut resp = self
            .agent
            .post(&self.profile.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| AgentError::Client(self.scrub(&e.to_string())))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| AgentError::Client(self.scrub(&e.to_string())))?;
        self.transcript.lock().push(TranscriptEntry {
            role,
            request: self.scrub(&body.to_string()),
            response: self.scrub(&text),
        });
        if !status.is_success() {
            return Err(AgentError::Client(format!("HTTP {status}: {}", self.scrub(&text))));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| AgentError::Client(format!("response is not JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| AgentError::Client("response has no choices[0].message.content".into()))
    }

    fn model_id(&self) -> &str {
        &self.profile.model_id
    }
}
