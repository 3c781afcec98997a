//! Question loop that drives research and keeps the report current.

use serde::{Deserialize, Serialize};

use super::archivist::UserBrief;
use super::report::Report;
use super::researcher::{format_excerpts, researcher_answer, ResearchAnswer, ResearchOptions, ResearchResources};
use super::{prompts, AgentError};
use crate::llm::{CallRole, ClientSet, Gateway, Message};
use crate::retrieval::RetrievalConfig;

pub const DEFAULT_D_MAX: usize = 5;
/// Extra attempts after an empty or repeated question.
pub const MAX_REGENERATIONS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppedBy {
    ConfidencePhrase,
    TurnCap,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub research: ResearchAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterrogationState {
    pub brief: UserBrief,
    pub turns: Vec<Turn>,
    pub report: Option<Report>,
    /// Markdown of the current draft as the model wrote it.
    pub report_markdown: String,
    pub d_max: usize,
    pub stopped_by: StoppedBy,
}

impl InterrogationState {
    pub fn new(brief: UserBrief, d_max: usize) -> Self {
        Self { brief, turns: Vec::new(), report: None, report_markdown: String::new(), d_max, stopped_by: StoppedBy::None }
    }

    pub fn questions(&self) -> Vec<String> {
        self.turns.iter().map(|t| t.question.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextQuestion {
    Ask(String),
    Done(StoppedBy),
}

#[derive(Debug, Clone)]
pub struct InterrogatorOptions {
    /// Lowercase clause whose presence in a reply ends the loop.
    pub stop_clause: String,
    pub research: ResearchOptions,
    pub retrieval: RetrievalConfig,
}

impl Default for InterrogatorOptions {
    fn default() -> Self {
        Self { stop_clause: prompts::STOP_CLAUSE.into(), research: ResearchOptions::default(), retrieval: RetrievalConfig::default() }
    }
}

pub fn is_stop_phrase(reply: &str, clause: &str) -> bool {
    reply.to_lowercase().contains(&clause.to_lowercase())
}

fn clean_question(reply: &str) -> String {
    let t = reply.trim();
    let t = t.strip_prefix("Question:").unwrap_or(t);
    t.trim().trim_matches('"').trim().to_string()
}

/// Next question, or why the loop should end. The turn cap is checked
/// before any call. Stop phrases on a fresh state do not end the loop: the
/// user's own query becomes the first question. An empty or repeated
/// question is regenerated up to [`MAX_REGENERATIONS`] times (ledger
/// records marked as repairs) and then ends the loop as a turn-cap stop.
pub fn next_question(state: &InterrogationState, chat: &Gateway, options: &InterrogatorOptions) -> Result<NextQuestion, AgentError> {
    if state.turns.len() >= state.d_max {
        return Ok(NextQuestion::Done(StoppedBy::TurnCap));
    }
    let asked = state.questions();
    let b = &state.brief;
    let mut messages = vec![
        Message::system(prompts::interrogation_system(&b.query, &b.context, &b.instructions, state.d_max - state.turns.len())),
        Message::user(prompts::interrogation_user(&state.report_markdown, &asked)),
    ];
    for attempt in 0..=MAX_REGENERATIONS {
        let reply = if attempt == 0 {
            chat.chat(CallRole::InterrogatorQuestion, messages.clone())?
        } else {
            chat.chat_repair(CallRole::InterrogatorQuestion, messages.clone())?
        };
        if is_stop_phrase(&reply, &options.stop_clause) {
            return Ok(if state.turns.is_empty() { NextQuestion::Ask(b.query.clone()) } else { NextQuestion::Done(StoppedBy::ConfidencePhrase) });
        }
        let q = clean_question(&reply);
        if !q.is_empty() && !asked.contains(&q) {
            return Ok(NextQuestion::Ask(q));
        }
        messages.push(Message::assistant(reply));
        messages.push(Message::user(prompts::DUPLICATE_QUESTION_NUDGE));
    }
    if state.turns.is_empty() {
        return Ok(NextQuestion::Ask(b.query.clone()));
    }
    Ok(NextQuestion::Done(StoppedBy::TurnCap))
}

/// Question, answer and evidence block handed to the report writer.
pub fn conversation_block(question: &str, research: &ResearchAnswer) -> String {
    let mut s = format!("Question: {}\nAnswer: {}", question.trim(), research.answer_text().trim());
    if research.nl_answer.is_some() && !research.retrieval.spans.is_empty() {
        s.push_str("\nEvidence:\n");
        s.push_str(&format_excerpts(&research.retrieval.spans));
    }
    if !research.examples.is_empty() {
        s.push_str("\nExamples from other contracts:\n");
        for e in &research.examples {
            s.push_str(&format!("({}) {}\n", e.label.as_deref().unwrap_or("unlabeled"), e.text));
        }
    }
    s
}

/// Rewrite the draft with the new turn: one `report_refine` call, plus one
/// repair call when the reply fails to parse or validate.
pub fn refine_report(state: &InterrogationState, question: &str, research: &ResearchAnswer, chat: &Gateway) -> Result<(Report, String), AgentError> {
    let b = &state.brief;
    let mut messages = vec![
        Message::system(prompts::report_system()),
        Message::user(prompts::report_user(&b.query, &b.context, &conversation_block(question, research), &state.report_markdown)),
    ];
    let draft = chat.chat(CallRole::ReportRefine, messages.clone())?;
    let problem = match check(&draft) {
        Ok(r) => return Ok((r, draft)),
        Err(p) => p,
    };
    messages.push(Message::assistant(draft.clone()));
    messages.push(Message::user(prompts::report_repair_user(&problem, &draft)));
    let repaired = chat.chat_repair(CallRole::ReportRefine, messages)?;
    match check(&repaired) {
        Ok(r) => Ok((r, repaired)),
        Err(problem) => Err(AgentError::SchemaViolation { problem, draft: repaired }),
    }
}

fn check(md: &str) -> Result<Report, String> {
    let r = Report::parse_markdown(md)?;
    r.validate(true)?;
    Ok(r)
}

/// Failed run with everything gathered up to the failure.
#[derive(Debug)]
pub struct InterrogationFailure {
    pub error: AgentError,
    pub state: Box<InterrogationState>,
}

impl std::fmt::Display for InterrogationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "interrogation failed after {} turns: {}", self.state.turns.len(), self.error)
    }
}

impl std::error::Error for InterrogationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Question, research, refine until the interrogator is confident or
/// `d_max` turns have run. `observer` sees the state after every turn.
pub fn run_interrogation(
    brief: UserBrief,
    resources: ResearchResources<'_>,
    d_max: usize,
    clients: &ClientSet,
    options: &InterrogatorOptions,
    observer: &mut dyn FnMut(&InterrogationState),
) -> Result<(Report, InterrogationState), InterrogationFailure> {
    let mut state = InterrogationState::new(brief, d_max);
    let fail = |error: AgentError, state: InterrogationState| InterrogationFailure { error, state: Box::new(state) };
    if d_max == 0 {
        return Err(fail(AgentError::InvalidArgument("d_max must be at least 1".into()), state));
    }
    if state.brief.query.trim().is_empty() {
        return Err(fail(AgentError::EmptyQuery, state));
    }
    loop {
        let question = match next_question(&state, &clients.interrogator, options) {
            Ok(NextQuestion::Ask(q)) => q,
            Ok(NextQuestion::Done(why)) => {
                state.stopped_by = why;
                break;
            }
            Err(e) => return Err(fail(e, state)),
        };
        let research = match researcher_answer(&question, resources, clients, &options.retrieval, options.research) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, state)),
        };
        let (report, markdown) = match refine_report(&state, &question, &research, &clients.interrogator) {
            Ok(x) => x,
            Err(e) => return Err(fail(e, state)),
        };
        state.turns.push(Turn { question, research });
        state.report = Some(report);
        state.report_markdown = markdown;
        observer(&state);
    }
    let Some(report) = state.report.clone() else {
        return Err(fail(AgentError::SchemaViolation { problem: "no report was produced".into(), draft: String::new() }, state));
    };
    if let Err(problem) = report.validate(state.stopped_by == StoppedBy::ConfidencePhrase) {
        let draft = state.report_markdown.clone();
        return Err(fail(AgentError::SchemaViolation { problem, draft }, state));
    }
    Ok((report, state))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::chunker::assemble_chunk_set;
    use crate::doctree::{parse_document, ParseOptions};
    use crate::index::ChunkIndex;
    use crate::llm::{ChatClient, Completion, FnChat, HashEmbedder, LexicalReranker, MockPipelineChat};

    const DOC: &str = "1. Confidentiality\n1.1 The Recipient may disclose Confidential Information to employees who need to know.\n2. Term\n2.1 This Agreement lasts two years.\n3. Return\n3.1 On request the Recipient shall return all copies.";

    fn index() -> ChunkIndex {
        let t = parse_document(DOC, "nda.txt", &ParseOptions::default());
        ChunkIndex::build(assemble_chunk_set(&t), [("nda.txt".into(), DOC.into())], Some(&HashEmbedder::default()), "nda").unwrap()
    }

    fn clients(chat: impl ChatClient + 'static) -> ClientSet {
        ClientSet::uniform(Arc::new(chat), Arc::new(HashEmbedder::default()), Arc::new(LexicalReranker))
    }

    fn brief() -> UserBrief {
        UserBrief::new("May the recipient share confidential information with employees?").unwrap()
    }

    fn run(chat: impl ChatClient + 'static, d_max: usize) -> (Result<(Report, InterrogationState), InterrogationFailure>, ClientSet) {
        let idx = index();
        let c = clients(chat);
        let r = run_interrogation(brief(), ResearchResources::document(&idx), d_max, &c, &InterrogatorOptions::default(), &mut |_| {});
        (r, c)
    }

    #[test]
    fn never_stopping_hits_cap() {
        let (r, c) = run(MockPipelineChat::never_stopping(), DEFAULT_D_MAX);
        let (report, state) = r.unwrap();
        assert_eq!(state.turns.len(), 5);
        assert_eq!(state.stopped_by, StoppedBy::TurnCap);
        report.validate(false).unwrap();
        assert_eq!(c.ledger.count(CallRole::InterrogatorQuestion), 5);
        assert_eq!(c.ledger.count(CallRole::ReportRefine), 5);
    }

    #[test]
    fn stop_phrase_after_two_turns() {
        let (r, c) = run(MockPipelineChat::stopping_after(2), 5);
        let (_, state) = r.unwrap();
        assert_eq!(state.turns.len(), 2);
        assert_eq!(state.stopped_by, StoppedBy::ConfidencePhrase);
        assert_eq!(c.ledger.count(CallRole::InterrogatorQuestion), 3);
    }

    #[test]
    fn single_turn_budget() {
        let (r, _) = run(MockPipelineChat::never_stopping(), 1);
        let (report, state) = r.unwrap();
        assert_eq!(state.turns.len(), 1);
        assert!(!report.sources.is_empty());
    }

    #[test]
    fn first_question_is_verbatim() {
        let idx = index();
        let c = clients(FnChat::new(|_| Ok(Completion::text("What is the scope of permitted disclosure?"))));
        let state = InterrogationState::new(brief(), 5);
        let q = next_question(&state, &c.interrogator, &InterrogatorOptions::default()).unwrap();
        assert_eq!(q, NextQuestion::Ask("What is the scope of permitted disclosure?".into()));
        drop(idx);
    }

    #[test]
    fn always_duplicating_terminates() {
        let mock = MockPipelineChat::never_stopping();
        let chat = FnChat::new(move |req| match req.call_role {
            CallRole::InterrogatorQuestion => Ok(Completion::text("Same question again?")),
            _ => mock.complete(req),
        });
        let (r, c) = run(chat, 5);
        let (_, state) = r.unwrap();
        assert_eq!(state.turns.len(), 1);
        assert_eq!(state.stopped_by, StoppedBy::TurnCap);
        let repairs = c.ledger.records().iter().filter(|r| r.repair).count();
        assert_eq!(repairs, MAX_REGENERATIONS);
    }

    #[test]
    fn malformed_report_is_schema_violation_with_state() {
        let mock = MockPipelineChat::never_stopping();
        let chat = FnChat::new(move |req| match req.call_role {
            CallRole::ReportRefine => Ok(Completion::text("## Title: Oops\n\n### Summary:\nno other sections")),
            _ => mock.complete(req),
        });
        let (r, c) = run(chat, 5);
        let failure = r.unwrap_err();
        assert!(matches!(failure.error, AgentError::SchemaViolation { .. }));
        assert!(failure.state.turns.is_empty());
        assert_eq!(c.ledger.count(CallRole::ReportRefine), 2);
    }

    #[test]
    fn stop_phrase_is_case_insensitive() {
        assert!(is_stop_phrase("THANK YOU, I AM NOW IN A POSITION TO ANSWER.", prompts::STOP_CLAUSE));
        assert!(!is_stop_phrase("I am not yet able to answer", prompts::STOP_CLAUSE));
    }

    #[test]
    fn zero_budget_rejected() {
        let (r, _) = run(MockPipelineChat::never_stopping(), 0);
        assert!(matches!(r.unwrap_err().error, AgentError::InvalidArgument(_)));
    }
}
