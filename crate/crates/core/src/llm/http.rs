//! OpenAI-compatible HTTP clients.
//!
//! Wire shapes:
//!
//! ```text
//! POST {base_url}/chat/completions  {"model", "messages":[{"role","content"}], "temperature"}
//!   -> {"choices":[{"message":{"content"}}], "usage":{"prompt_tokens","completion_tokens"}}
//! POST {base_url}/embeddings        {"model", "input":[...]}
//!   -> {"data":[{"index","embedding":[...]}]}
//! POST {base_url}/rerank            {"model", "query", "documents":[...]}
//!   -> {"results":[{"index","relevance_score"}]}   ("score" is accepted too)
//! ```

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use super::{ChatClient, ChatRequest, Completion, Embedder, LlmError, ProviderProfile, Reranker};

struct HttpCore {
    profile: ProviderProfile,
    client: reqwest::blocking::Client,
}

impl HttpCore {
    fn new(profile: ProviderProfile) -> Result<Self, LlmError> {
        profile.validate().map_err(LlmError::InvalidRequest)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(profile.timeout)
            .build()
            .map_err(|e| LlmError::Upstream(e.to_string()))?;
        Ok(Self { profile, client })
    }

    fn token(&self) -> Result<Option<String>, LlmError> {
        match &self.profile.auth_token_env_var {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(t) if !t.is_empty() => Ok(Some(t)),
                _ => Err(LlmError::Auth(format!("environment variable {var} is not set"))),
            },
        }
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: serde_json::Value) -> Result<T, LlmError> {
        // resolve credentials before touching the network
        let token = self.token()?;
        let url = format!("{}/{}", self.profile.base_url.trim_end_matches('/'), path);
        let mut req = self.client.post(&url).json(&body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout(self.profile.timeout)
            } else {
                LlmError::Upstream(e.to_string())
            }
        })?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(LlmError::Auth(format!("{url} returned {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(LlmError::Upstream(format!("{url} returned {status}: {}", truncate(&text, 300))));
        }
        resp.json::<T>().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout(self.profile.timeout)
            } else {
                LlmError::Upstream(format!("malformed response from {url}: {e}"))
            }
        })
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

pub struct HttpChatClient {
    core: HttpCore,
}

impl HttpChatClient {
    pub fn new(profile: ProviderProfile) -> Result<Self, LlmError> {
        Ok(Self { core: HttpCore::new(profile)? })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u32>,
    completion_tokens: Option<u32>,
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        let resp: ChatResponse = self.core.post("chat/completions", body)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Upstream("completion had no content".into()))?;
        Ok(Completion {
            text,
            prompt_tokens: resp.usage.as_ref().and_then(|u| u.prompt_tokens),
            completion_tokens: resp.usage.as_ref().and_then(|u| u.completion_tokens),
        })
    }
}

pub struct HttpEmbedder {
    core: HttpCore,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(profile: ProviderProfile, dim: usize) -> Result<Self, LlmError> {
        Ok(Self { core: HttpCore::new(profile)?, dim })
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.core.profile.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, LlmError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.core.profile.model_id, "input": texts });
        let resp: EmbeddingResponse = self.core.post("embeddings", body)?;
        if resp.data.len() != texts.len() {
            return Err(LlmError::Upstream(format!("expected {} embeddings, got {}", texts.len(), resp.data.len())));
        }
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, row) in resp.data.into_iter().enumerate() {
            let slot = row.index.unwrap_or(pos);
            if slot >= out.len() || row.embedding.len() != self.dim {
                return Err(LlmError::Upstream(format!(
                    "embedding row {slot} has dimension {} (expected {})",
                    row.embedding.len(),
                    self.dim
                )));
            }
            out[slot] = row.embedding;
        }
        Ok(out)
    }
}

pub struct HttpReranker {
    core: HttpCore,
}

impl HttpReranker {
    pub fn new(profile: ProviderProfile) -> Result<Self, LlmError> {
        Ok(Self { core: HttpCore::new(profile)? })
    }
}

#[derive(Deserialize)]
struct RerankResponse {
    results: Vec<RerankRow>,
}

#[derive(Deserialize)]
struct RerankRow {
    index: usize,
    #[serde(alias = "score")]
    relevance_score: f64,
}

impl Reranker for HttpReranker {
    fn model_id(&self) -> &str {
        &self.core.profile.model_id
    }

    fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, LlmError> {
        if passages.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.core.profile.model_id, "query": query, "documents": passages });
        let resp: RerankResponse = self.core.post("rerank", body)?;
        let mut out: Vec<Option<f64>> = vec![None; passages.len()];
        for row in resp.results {
            if let Some(slot) = out.get_mut(row.index) {
                *slot = Some(row.relevance_score);
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| LlmError::Upstream(format!("reranker omitted passage {i}"))))
            .collect()
    }
}
