//! Engine facade shared by the HTTP service and the command line.

mod config;
mod engine;
mod server;
mod storage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{EmbedderProfile, EngineConfig, Providers, DEFAULT_EMBED_DIM, ENV_PREFIX, TOKEN_ENV};
pub use engine::{
    AskOutput, DocumentRecord, DocumentSummary, Engine, EvalRequest, MessageReply, ProgressView, ReportView, SessionRecord,
    SessionStatus, TurnView,
};
pub use server::{router, serve};
pub use storage::Storage;

use crate::agents::AgentError;
use crate::eval::EvalError;
use crate::index::IndexError;
use crate::llm::LlmError;
use crate::pipeline::IngestError;
use crate::retrieval::RetrievalError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{what} {id:?} not found")]
    NotFound { what: &'static str, id: String },
    #[error("{0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("missing or invalid API token")]
    Unauthorized,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("stored index is unreadable: {0}")]
    Index(#[from] IndexError),
    #[error("storage: {0}")]
    Storage(String),
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Storage(e.to_string())
    }
}

impl From<serde_json::Error> for EngineError {
    fn from(e: serde_json::Error) -> Self {
        EngineError::Storage(e.to_string())
    }
}

/// Wire form of every error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub stage: Option<String>,
    pub message: String,
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Config(_) => "config",
            EngineError::NotFound { .. } => "not_found",
            EngineError::Conflict(_) => "conflict",
            EngineError::BadRequest(_) => "invalid_request",
            EngineError::Unauthorized => "unauthorized",
            EngineError::Agent(AgentError::SchemaViolation { .. }) => "schema_violation",
            EngineError::Agent(AgentError::EmptySession | AgentError::EmptyQuery | AgentError::InvalidArgument(_)) => {
                "invalid_request"
            }
            EngineError::Eval(EvalError::InvalidK | EvalError::EmptyCorpus(_) | EvalError::BadInput { .. }) => {
                "invalid_request"
            }
            e if e.is_upstream() => "upstream",
            _ => "internal",
        }
    }

    /// Pipeline stage the failure came from, when known.
    pub fn stage(&self) -> Option<String> {
        match self {
            EngineError::Agent(AgentError::Retrieval(r)) => Some(r.stage().map_or_else(|| "retrieval".to_string(), |s| s.to_string())),
            EngineError::Agent(AgentError::Upstream(_)) => Some("agents".into()),
            EngineError::Agent(AgentError::SchemaViolation { .. }) => Some("report".into()),
            EngineError::Agent(_) => Some("agents".into()),
            EngineError::Ingest(IngestError::Parse(_)) => Some("parse".into()),
            EngineError::Ingest(IngestError::Dedup(_)) => Some("chunk".into()),
            EngineError::Ingest(IngestError::Index(_)) => Some("index".into()),
            EngineError::Eval(_) => Some("eval".into()),
            EngineError::Index(_) => Some("index".into()),
            _ => None,
        }
    }

    pub fn is_upstream(&self) -> bool {
        fn llm(e: &LlmError) -> bool {
            !matches!(e, LlmError::InvalidRequest(_))
        }
        match self {
            EngineError::Agent(AgentError::Upstream(e)) => llm(e),
            EngineError::Agent(AgentError::Retrieval(RetrievalError::Upstream { .. })) => true,
            EngineError::Agent(AgentError::Index(IndexError::Embed(_))) => true,
            EngineError::Ingest(IngestError::Parse(e) | IngestError::Dedup(e)) => llm(e),
            EngineError::Ingest(IngestError::Index(IndexError::Embed(_))) => true,
            _ => false,
        }
    }

    pub fn http_status(&self) -> u16 {
        match self.code() {
            "not_found" => 404,
            "conflict" => 409,
            "invalid_request" => 400,
            "unauthorized" => 401,
            "schema_violation" => 422,
            "upstream" => 502,
            _ => 500,
        }
    }

    /// Process exit status for the command line.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "config" => 3,
            "upstream" => 4,
            _ => 1,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code().into(), stage: self.stage(), message: self.to_string() }
    }
}
