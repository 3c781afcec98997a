//! Provider-agnostic model clients.
//!
//! Three capabilities are modelled as traits: chat completion, embedding and
//! pairwise reranking. HTTP implementations speak the OpenAI-compatible wire
//! format; the mock and cassette implementations keep every pipeline test
//! offline and deterministic. All chat traffic goes through a [`Gateway`],
//! which applies the retry policy and appends to the shared [`CostLedger`].

mod cassette;
mod gateway;
mod http;
mod ledger;
mod mock;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{request_hash, CassetteEntry, RecordingChat, ReplayChat};
pub use gateway::{Gateway, ProviderProfile};
pub use http::{HttpChatClient, HttpEmbedder, HttpReranker};
pub use ledger::{expected_call_count, CallRecord, CallRole, CostLedger, ObservedCounts};
pub use mock::{FnChat, HashEmbedder, LexicalReranker, MockPipelineChat, ScriptedChat};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("upstream error: {0}")]
    Upstream(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Timeout(_) | LlmError::Upstream(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: MessageRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: MessageRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: MessageRole::Assistant, content: content.into() }
    }
}

/// One chat-completion request as seen by a [`ChatClient`].
///
/// `call_role` is accounting metadata; it never goes over the wire and is not
/// part of the cassette request hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f32,
    #[serde(skip)]
    pub call_role: CallRole,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), ..Default::default() }
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError>;
}

pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, LlmError>;

    fn embed_one(&self, text: &str) -> Result<Vec<f32>, LlmError> {
        let mut v = self.embed(&[text.to_string()])?;
        v.pop().ok_or_else(|| LlmError::Upstream("embedder returned no vectors".into()))
    }
}

/// Cross-encoder style scorer: one raw relevance score per (query, passage).
pub trait Reranker: Send + Sync {
    fn model_id(&self) -> &str;
    fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, LlmError>;
}

/// The per-stage clients a pipeline run needs, sharing one ledger.
#[derive(Clone)]
pub struct ClientSet {
    pub archivist: Gateway,
    pub interrogator: Gateway,
    pub researcher: Gateway,
    pub filter: Gateway,
    pub embedder: Arc<dyn Embedder>,
    pub reranker: Arc<dyn Reranker>,
    pub ledger: Arc<CostLedger>,
}

impl ClientSet {
    /// Binds the same chat client to every stage.
    pub fn uniform(
        chat: Arc<dyn ChatClient>,
        embedder: Arc<dyn Embedder>,
        reranker: Arc<dyn Reranker>,
    ) -> Self {
        let ledger = Arc::new(CostLedger::default());
        let gw = Gateway::new(chat, ProviderProfile::offline("mock"), ledger.clone());
        Self {
            archivist: gw.clone(),
            interrogator: gw.clone(),
            researcher: gw.clone(),
            filter: gw,
            embedder,
            reranker,
            ledger,
        }
    }

    /// Same clients, accounting into `ledger`.
    pub fn with_ledger(&self, ledger: Arc<CostLedger>) -> Self {
        Self {
            archivist: self.archivist.with_ledger(ledger.clone()),
            interrogator: self.interrogator.with_ledger(ledger.clone()),
            researcher: self.researcher.with_ledger(ledger.clone()),
            filter: self.filter.with_ledger(ledger.clone()),
            embedder: self.embedder.clone(),
            reranker: self.reranker.clone(),
            ledger,
        }
    }

    /// Fully offline set: role-aware mock chat, hash embedder, lexical reranker.
    pub fn offline() -> Self {
        Self::uniform(
            Arc::new(MockPipelineChat::default()),
            Arc::new(HashEmbedder::default()),
            Arc::new(LexicalReranker),
        )
    }
}
