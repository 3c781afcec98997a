//! Researcher: picks retrieval tools, runs them and optionally phrases an answer.

use serde::{Deserialize, Serialize};

use super::{prompts, AgentError};
use crate::index::{cross_document_examples, ChunkIndex, CorpusGraph, LabeledExample};
use crate::llm::{CallRole, ClientSet, Message};
use crate::retrieval::{retrieve_prepared, RetrievalConfig, RetrievalResult, RetrievedSpan};

pub use crate::index::DEFAULT_EXAMPLES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    InDocument,
    CrossDocument,
}

impl Tool {
    pub fn name(self) -> &'static str {
        match self {
            Tool::InDocument => "in_document",
            Tool::CrossDocument => "cross_document",
        }
    }

    fn description(self) -> &'static str {
        match self {
            Tool::InDocument => "hybrid keyword and semantic search over the clauses of the contract under analysis",
            Tool::CrossDocument => "labeled examples from other contracts, useful for judging how similar clauses were classified",
        }
    }
}

/// What the researcher can search.
#[derive(Debug, Clone, Copy)]
pub struct ResearchResources<'a> {
    pub index: &'a ChunkIndex,
    pub graph: Option<&'a CorpusGraph>,
}

impl<'a> ResearchResources<'a> {
    pub fn document(index: &'a ChunkIndex) -> Self {
        Self { index, graph: None }
    }

    pub fn tools(&self) -> Vec<Tool> {
        let mut t = vec![Tool::InDocument];
        if self.graph.is_some() {
            t.push(Tool::CrossDocument);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResearchOptions {
    pub nl_response: bool,
    pub examples: usize,
}

impl Default for ResearchOptions {
    fn default() -> Self {
        Self { nl_response: true, examples: DEFAULT_EXAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub text: String,
    pub label: Option<String>,
    pub filename: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchAnswer {
    pub question: String,
    pub tools: Vec<Tool>,
    pub retrieval: RetrievalResult,
    pub examples: Vec<FewShotExample>,
    pub nl_answer: Option<String>,
}

/// "`doc.txt`, clause 2.1" style pointer for a span.
pub fn locator(span: &RetrievedSpan) -> String {
    match span.node_path.iter().rev().find(|l| !l.is_empty()) {
        Some(label) => format!("{}, clause {}", span.filename, label.trim_end_matches('.')),
        None => format!("{}, characters {}-{}", span.filename, span.core_span.start, span.core_span.end),
    }
}

pub fn format_excerpts(spans: &[RetrievedSpan]) -> String {
    spans
        .iter()
        .enumerate()
        .map(|(i, s)| format!("[{}] ({}) \"{}\"", i + 1, locator(s), s.text.split_whitespace().collect::<Vec<_>>().join(" ")))
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_examples(ex: &[FewShotExample]) -> String {
    ex.iter()
        .map(|e| format!("({}) {}", e.label.as_deref().unwrap_or("unlabeled"), e.text.split_whitespace().collect::<Vec<_>>().join(" ")))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ResearchAnswer {
    /// Text handed to the report writer: the phrased answer when there is
    /// one, otherwise the excerpts themselves.
    pub fn answer_text(&self) -> String {
        match &self.nl_answer {
            Some(a) => a.clone(),
            None if self.retrieval.spans.is_empty() => "No relevant provision was found in the document.".into(),
            None => format_excerpts(&self.retrieval.spans),
        }
    }
}

#[derive(Deserialize)]
struct ToolChoice {
    #[serde(default)]
    tools: Vec<String>,
    #[serde(default)]
    query: String,
}

/// Answer one question: a single planning call (tool choice and search
/// query together, or just the query when only one tool exists), the
/// chosen searches, and an optional phrased answer. Ledger: one
/// `researcher_query_extract` record plus one `researcher_nl_response`
/// record when enabled.
pub fn researcher_answer(
    question: &str,
    resources: ResearchResources<'_>,
    clients: &ClientSet,
    config: &RetrievalConfig,
    options: ResearchOptions,
) -> Result<ResearchAnswer, AgentError> {
    let available = resources.tools();
    let (tools, search_query) = if available.len() == 1 {
        let reply = clients.researcher.chat(
            CallRole::ResearcherQueryExtract,
            vec![Message::system(prompts::QUERY_EXTRACT_SYSTEM), Message::user(prompts::query_extract_user(question))],
        )?;
        (available, reply.trim().to_string())
    } else {
        let listing: String = available.iter().map(|t| format!("- {}: {}\n", t.name(), t.description())).collect();
        let reply = clients.researcher.chat(
            CallRole::ResearcherQueryExtract,
            vec![Message::system(prompts::TOOL_SELECT_SYSTEM), Message::user(prompts::tool_select_user(question, listing.trim_end()))],
        )?;
        let choice = reply
            .find('{')
            .zip(reply.rfind('}'))
            .and_then(|(s, e)| serde_json::from_str::<ToolChoice>(&reply[s..=e]).ok());
        match choice {
            Some(c) => {
                let mut chosen: Vec<Tool> = available.iter().copied().filter(|t| c.tools.iter().any(|n| n == t.name())).collect();
                if chosen.is_empty() {
                    chosen.push(Tool::InDocument);
                }
                (chosen, c.query.trim().to_string())
            }
            None => (vec![Tool::InDocument], String::new()),
        }
    };
    let search_query = if search_query.is_empty() { question.to_string() } else { search_query };

    let retrieval = if tools.contains(&Tool::InDocument) {
        retrieve_prepared(question, &search_query, resources.index, clients, config)?
    } else {
        RetrievalResult { query: question.into(), search_query: search_query.clone(), ..Default::default() }
    };

    let examples = match (tools.contains(&Tool::CrossDocument), resources.graph) {
        (true, Some(graph)) => cross_document_examples(graph, clients.embedder.as_ref(), question, options.examples)?
            .into_iter()
            .map(|LabeledExample { chunk, label, .. }| FewShotExample { text: chunk.text, label, filename: chunk.filename })
            .collect(),
        _ => Vec::new(),
    };

    let nl_answer = if options.nl_response {
        let user = prompts::nl_response_user(question, &format_excerpts(&retrieval.spans), &format_examples(&examples));
        Some(clients.researcher.chat(CallRole::ResearcherNlResponse, vec![Message::system(prompts::NL_RESPONSE_SYSTEM), Message::user(user)])?)
    } else {
        None
    };

    Ok(ResearchAnswer { question: question.into(), tools, retrieval, examples, nl_answer })
}
