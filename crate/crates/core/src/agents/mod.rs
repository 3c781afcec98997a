//! The three agents: intake (archivist), retrieval (researcher) and the
//! question loop (interrogator), plus the report they produce.

mod archivist;
mod interrogator;
pub mod prompts;
mod report;
mod researcher;

use thiserror::Error;

pub use archivist::{ArchivistReply, ArchivistSession, UserBrief};
pub use interrogator::{
    conversation_block, is_stop_phrase, next_question, refine_report, run_interrogation, InterrogationFailure,
    InterrogationState, InterrogatorOptions, NextQuestion, StoppedBy, Turn, DEFAULT_D_MAX, MAX_REGENERATIONS,
};
pub use report::{extract_nli_label, NliLabel, Report, Source, DISCLAIMER};
pub use researcher::{
    format_excerpts, locator, researcher_answer, FewShotExample, ResearchAnswer, ResearchOptions, ResearchResources, Tool,
};

use crate::index::IndexError;
use crate::llm::LlmError;
use crate::retrieval::RetrievalError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("model call failed: {0}")]
    Upstream(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("cross-document lookup failed: {0}")]
    Index(#[from] IndexError),
    #[error("report does not follow the required structure: {problem}")]
    SchemaViolation { problem: String, draft: String },
    #[error("session has no user messages")]
    EmptySession,
    #[error("brief has an empty query")]
    EmptyQuery,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
