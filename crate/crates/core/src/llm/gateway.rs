use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CallRecord, CallRole, ChatClient, ChatRequest, CostLedger, LlmError, Message};

/// Connection and sampling settings for one model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderProfile {
    pub base_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the bearer token. Tokens are
    /// never read from config files.
    pub auth_token_env_var: Option<String>,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f32,
    /// First retry delay; doubled on every further attempt.
    pub backoff_base_ms: u64,
}

impl Default for ProviderProfile {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_id: "default".into(),
            auth_token_env_var: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            temperature: 0.0,
            backoff_base_ms: 500,
        }
    }
}

impl ProviderProfile {
    /// Profile for in-process clients: no network, no backoff.
    pub fn offline(model_id: &str) -> Self {
        Self { base_url: "mock://local".into(), model_id: model_id.into(), backoff_base_ms: 0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let parsed = reqwest::Url::parse(&self.base_url).map_err(|e| format!("base_url {:?}: {e}", self.base_url))?;
        if parsed.cannot_be_a_base() {
            return Err(format!("base_url {:?} cannot be a base URL", self.base_url));
        }
        if self.timeout.is_zero() {
            return Err("timeout must be positive".into());
        }
        Ok(())
    }

    pub(crate) fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(serde::de::Error::custom("timeout must be a nonnegative number of seconds"));
        }
        Ok(Duration::from_secs_f64(v))
    }
}

/// A chat client bound to a profile and a ledger.
#[derive(Clone)]
pub struct Gateway {
    client: Arc<dyn ChatClient>,
    profile: ProviderProfile,
    ledger: Arc<CostLedger>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("profile", &self.profile).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(client: Arc<dyn ChatClient>, profile: ProviderProfile, ledger: Arc<CostLedger>) -> Self {
        Self { client, profile, ledger }
    }

    pub fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    pub fn ledger(&self) -> &Arc<CostLedger> {
        &self.ledger
    }

    /// Same client and profile, different ledger.
    pub fn with_ledger(&self, ledger: Arc<CostLedger>) -> Self {
        Self { client: self.client.clone(), profile: self.profile.clone(), ledger }
    }

    pub fn chat(&self, role: CallRole, messages: Vec<Message>) -> Result<String, LlmError> {
        self.chat_inner(role, messages, false)
    }

    /// A call the closed-form cost model does not count (regeneration, schema repair).
    pub fn chat_repair(&self, role: CallRole, messages: Vec<Message>) -> Result<String, LlmError> {
        self.chat_inner(role, messages, true)
    }

    fn chat_inner(&self, role: CallRole, messages: Vec<Message>, repair: bool) -> Result<String, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::InvalidRequest("messages must not be empty".into()));
        }
        let request = ChatRequest {
            model: self.profile.model_id.clone(),
            messages,
            temperature: self.profile.temperature,
            call_role: role,
        };
        let started = Instant::now();
        let mut attempt = 0;
        loop {
            match self.client.complete(&request) {
                Ok(c) => {
                    self.ledger.append(CallRecord {
                        role,
                        wall_time_ms: started.elapsed().as_secs_f64() * 1000.0,
                        prompt_tokens: c.prompt_tokens,
                        completion_tokens: c.completion_tokens,
                        repair,
                    });
                    return Ok(c.text);
                }
                Err(e) if e.is_retryable() && attempt < self.profile.max_retries => {
                    tracing::warn!(?role, attempt, error = %e, "chat call failed, retrying");
                    std::thread::sleep(self.profile.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
