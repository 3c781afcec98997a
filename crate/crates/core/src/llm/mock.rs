//! Deterministic in-process clients for tests, offline runs and CI.

use std::collections::VecDeque;
use std::sync::Mutex;

use super::{CallRole, ChatClient, ChatRequest, Completion, Embedder, LlmError, Reranker};
use crate::agents::prompts::{extract_tag, STOP_PHRASE};
use crate::tokenize::tokenize;

/// Replies with a fixed sequence of completions, then fails.
pub struct ScriptedChat {
    script: Mutex<VecDeque<Result<String, LlmError>>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_results(replies.into_iter().map(|s| Ok(s.into())))
    }

    pub fn from_results(replies: impl IntoIterator<Item = Result<String, LlmError>>) -> Self {
        Self { script: Mutex::new(replies.into_iter().collect()), seen: Mutex::new(Vec::new()) }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

impl ChatClient for ScriptedChat {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        self.seen.lock().unwrap().push(request.clone());
        match self.script.lock().unwrap().pop_front() {
            Some(r) => r.map(Completion::text),
            None => Err(LlmError::Upstream("scripted chat exhausted".into())),
        }
    }
}

type ChatFn = dyn Fn(&ChatRequest) -> Result<Completion, LlmError> + Send + Sync;

/// Chat client backed by a closure.
pub struct FnChat {
    f: Box<ChatFn>,
}

impl FnChat {
    pub fn new(f: impl Fn(&ChatRequest) -> Result<Completion, LlmError> + Send + Sync + 'static) -> Self {
        Self { f: Box::new(f) }
    }
}

impl ChatClient for FnChat {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        (self.f)(request)
    }
}

/// Role-aware mock that plays every agent well enough to drive the full
/// pipeline offline. It reads the tagged blocks the prompts carry and
/// produces well-formed replies for each call role.
#[derive(Debug, Clone, Default)]
pub struct MockPipelineChat {
    /// Emit the stop phrase once this many questions have been asked.
    pub stop_after_questions: Option<usize>,
    /// NLI label written, emphasized, into the preliminary answer.
    pub label: Option<String>,
}

impl MockPipelineChat {
    pub fn never_stopping() -> Self {
        Self::default()
    }

    pub fn stopping_after(n: usize) -> Self {
        Self { stop_after_questions: Some(n), ..Self::default() }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    fn reply(&self, req: &ChatRequest) -> String {
        let all: String = req.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        let question = extract_tag(&all, "question").unwrap_or("").trim().to_string();
        match req.call_role {
            CallRole::ArchivistTurn => {
                "Thank you. Is there any further context or instruction you would like the analysis to consider?".into()
            }
            CallRole::ArchivistFinalize => {
                let transcript = extract_tag(&all, "transcript").unwrap_or("");
                let users = all_tags(transcript, "user");
                let query = users.first().map(|s| s.trim().to_string()).unwrap_or_default();
                let context = users.iter().skip(1).map(|s| s.trim()).collect::<Vec<_>>().join("\n");
                serde_json::json!({ "query": query, "context": context, "instructions": "" }).to_string()
            }
            CallRole::LlmParse => "[]".into(),
            CallRole::InterrogatorQuestion => {
                let asked = extract_tag(&all, "questions")
                    .map(|b| b.lines().filter(|l| !l.trim().is_empty() && l.trim() != "(none)").count())
                    .unwrap_or(0);
                match self.stop_after_questions {
                    Some(n) if asked >= n => STOP_PHRASE.to_string(),
                    _ if asked == 0 => format!("{}?", question_core(&question)),
                    _ => format!("{} (aspect {})?", question_core(&question), asked + 1),
                }
            }
            CallRole::ResearcherQueryExtract => {
                if extract_tag(&all, "tools").is_some() {
                    serde_json::json!({ "tools": ["in_document"], "query": question }).to_string()
                } else {
                    question
                }
            }
            CallRole::ResearcherNlResponse => {
                let excerpts = extract_tag(&all, "excerpts").unwrap_or("").trim();
                match excerpts.lines().find(|l| !l.trim().is_empty()) {
                    Some(first) => format!("The most relevant provision reads: {}", first.trim()),
                    None => "No relevant provision was found in the document.".into(),
                }
            }
            CallRole::ReportRefine => self.report(&all, &question),
            CallRole::Summarize => {
                let doc = extract_tag(&all, "document").unwrap_or("").trim();
                let head: String = doc.split_whitespace().take(24).collect::<Vec<_>>().join(" ");
                format!("Contract summary: {head}")
            }
            CallRole::Filter => {
                let passage = extract_tag(&all, "passage").unwrap_or("").trim();
                first_sentence(passage).to_string()
            }
            CallRole::Unspecified => "ok".into(),
        }
    }

    fn report(&self, all: &str, question: &str) -> String {
        let conversation = extract_tag(all, "conversation").unwrap_or("");
        let answers: Vec<String> = conversation
            .lines()
            .filter_map(|l| l.trim().strip_prefix("Answer:"))
            .map(|a| a.trim().replace('"', "'"))
            .collect();
        let mut quotes: Vec<(String, String)> = extract_tag(all, "legal_report")
            .and_then(|md| crate::agents::Report::parse_markdown(md).ok())
            .map(|r| r.sources.into_iter().map(|s| (s.quote, s.locator)).collect())
            .unwrap_or_default();
        let turn = quotes.len() + 1;
        for (i, a) in answers.iter().enumerate() {
            quotes.push((a.chars().take(120).collect(), format!("Research turn {}", turn + i)));
        }
        if quotes.is_empty() {
            quotes.push(("no excerpt".into(), "Research turn 1".into()));
        }
        let n = quotes.len();
        let cites: String = (1..=n).map(|i| format!("[{i}]")).collect::<Vec<_>>().join(", ");
        let preliminary = match &self.label {
            Some(l) => format!("The hypothesis appears to be **{l}** on the evidence cited [1]."),
            None => "A preliminary reading of the cited provisions supports a tentative answer [1].".into(),
        };
        let mut sources = String::new();
        for (i, (quote, locator)) in quotes.iter().enumerate() {
            sources.push_str(&format!("{}. \"{}\" - {}\n", i + 1, quote, locator));
        }
        format!(
            "## Title: Analysis of {}\n\n### Summary:\nThe question asks: {}\n\n### Legal Reasoning & Analysis:\nThe research turns surface the relevant provisions {}.\n\n### Preliminary Answer & Direction for Further Research:\n{}\n\n### Gaps & Next Questions:\n- Are there exceptions that qualify the provision cited in [1]?\n\n### Sources:\n{}",
            question_core(question),
            question,
            cites,
            preliminary,
            sources
        )
    }
}

fn question_core(q: &str) -> String {
    let trimmed: String = q.chars().take(80).collect();
    trimmed.trim_end_matches(['?', '.', ' ']).to_string()
}

fn first_sentence(text: &str) -> &str {
    match text.find(". ") {
        Some(i) => &text[..=i],
        None => text,
    }
}

fn all_tags<'a>(text: &'a str, tag: &str) -> Vec<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(s) = rest.find(&open) {
        let after = &rest[s + open.len()..];
        match after.find(&close) {
            Some(e) => {
                out.push(&after[..e]);
                rest = &after[e + close.len()..];
            }
            None => break,
        }
    }
    out
}

impl ChatClient for MockPipelineChat {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        Ok(Completion::text(self.reply(request)))
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, salt: u64, token: &str) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for b in salt.to_le_bytes().iter().chain(token.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Seeded feature-hashing embedder: each token of the multiset is hashed
/// into a few signed buckets, then the vector is L2-normalized. Texts that
/// share tokens get high cosine similarity; no model is involved.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    model_id: String,
}

impl HashEmbedder {
    const PROBES: u64 = 3;

    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed, model_id: format!("hash-{dim}-{seed}") }
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        for tok in tokenize(text) {
            for probe in 0..Self::PROBES {
                let h = fnv1a(self.seed, probe, &tok);
                let idx = (h % self.dim as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                v[idx] += sign;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256, 7)
    }
}

impl Embedder for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, LlmError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Reranker whose score grows with the share of query terms found in the
/// passage, with a small bonus for dense (short, on-topic) passages.
/// Function words are ignored and terms compare on a six-character prefix,
/// so "govern" matches "governed". Raw scores lie in [-3, 4].
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReranker;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "any", "are", "as", "at", "be", "by", "can", "do", "does", "for", "from", "has", "have", "how", "if",
    "in", "is", "it", "its", "may", "of", "on", "or", "shall", "that", "the", "their", "there", "this", "to", "under",
    "was", "what", "when", "where", "which", "who", "will", "with", "would",
];

fn content_terms(text: &str) -> std::collections::BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().count() > 1 && !STOPWORDS.contains(&t.as_str()))
        .map(|t| {
            let t = match t.strip_suffix('s') {
                Some(stem) if stem.len() > 2 && !stem.ends_with('s') => stem,
                _ => t.as_str(),
            };
            t.chars().take(6).collect()
        })
        .collect()
}

impl LexicalReranker {
    pub fn raw_score(query: &str, passage: &str) -> f64 {
        let q = content_terms(query);
        let p = content_terms(passage);
        if q.is_empty() || p.is_empty() {
            return -3.0;
        }
        let hit = q.intersection(&p).count() as f64;
        let coverage = hit / q.len() as f64;
        let density = hit / p.len() as f64;
        6.0 * coverage - 3.0 + density
    }
}

impl Reranker for LexicalReranker {
    fn model_id(&self) -> &str {
        "lexical-overlap"
    }

    fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, LlmError> {
        Ok(passages.iter().map(|p| Self::raw_score(query, p)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Message;

    fn req(role: CallRole, text: &str) -> ChatRequest {
        ChatRequest { model: "m".into(), messages: vec![Message::user(text)], temperature: 0.0, call_role: role }
    }

    #[test]
    fn scripted_chat_plays_in_order_then_fails() {
        let chat = ScriptedChat::new(["a", "b"]);
        assert_eq!(chat.complete(&req(CallRole::Filter, "x")).unwrap().text, "a");
        assert_eq!(chat.complete(&req(CallRole::Filter, "y")).unwrap().text, "b");
        assert!(chat.complete(&req(CallRole::Filter, "z")).is_err());
        assert_eq!(chat.requests().len(), 3);
    }

    #[test]
    fn hash_embedder_is_deterministic_and_normalized() {
        let e = HashEmbedder::new(64, 1);
        let a = e.vector("the seller shall deliver");
        assert_eq!(a, e.vector("the seller shall deliver"));
        let norm: f32 = a.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-5);
        assert!(e.vector("").iter().all(|x| *x == 0.0));
        assert_ne!(a, HashEmbedder::new(64, 2).vector("the seller shall deliver"));
    }

    #[test]
    fn hash_embedder_tracks_lexical_overlap() {
        let e = HashEmbedder::default();
        let cos = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f32>();
        let q = e.vector("governing law of the state");
        let near = e.vector("This agreement is governed by the law of the State of Delaware");
        let far = e.vector("Invoices are payable within thirty days");
        assert!(cos(&q, &near) > cos(&q, &far));
    }

    #[test]
    fn lexical_reranker_prefers_matching_passage() {
        let s = LexicalReranker.score("termination notice", &["Either party may terminate upon notice".into(), "termination notice period".into()]).unwrap();
        assert!(s[1] > s[0]);
    }

    #[test]
    fn mock_pipeline_stops_after_configured_questions() {
        let chat = MockPipelineChat::stopping_after(1);
        let first = chat.complete(&req(CallRole::InterrogatorQuestion, "<question>q</question><questions>\n(none)\n</questions>")).unwrap();
        assert_eq!(first.text, "q?");
        let second = chat.complete(&req(CallRole::InterrogatorQuestion, "<question>q</question><questions>\n1. a\n</questions>")).unwrap();
        assert_eq!(second.text, STOP_PHRASE);
    }
}
