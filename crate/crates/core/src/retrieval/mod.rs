//! In-document retrieval: lexical and dense search fused by RRF, then
//! cross-encoder reranking with a sigmoid cut, context stripping and an
//! optional model-based sub-span filter.

mod filter;
mod rrf;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::llm_filter;
pub use rrf::{rrf_fuse, DEFAULT_RRF_K};

use crate::agents::prompts;
use crate::chunker::Chunk;
use crate::index::{ChunkIndex, IndexError, DEFAULT_MIN_NORM_SCORE, DEFAULT_TOP_N};
use crate::llm::{CallRole, ClientSet, LlmError, Message, Reranker};
use crate::span::CharSpan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub bm25_top_n: usize,
    pub bm25_min_norm_score: f64,
    pub dense_top_n: usize,
    /// Weights for the lexical and dense rankings, in that order.
    pub rrf_weights: Vec<f64>,
    pub rrf_k: f64,
    pub fused_top_n: usize,
    pub rerank_keep: usize,
    pub sigmoid_threshold: f64,
    pub answer_top_k: usize,
    pub llm_filter: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            bm25_top_n: DEFAULT_TOP_N,
            bm25_min_norm_score: DEFAULT_MIN_NORM_SCORE,
            dense_top_n: DEFAULT_TOP_N,
            rrf_weights: vec![1.0, 1.0],
            rrf_k: DEFAULT_RRF_K,
            fused_top_n: 64,
            rerank_keep: 64,
            sigmoid_threshold: 0.5,
            answer_top_k: 10,
            llm_filter: false,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("bm25_top_n", self.bm25_top_n),
            ("dense_top_n", self.dense_top_n),
            ("fused_top_n", self.fused_top_n),
            ("rerank_keep", self.rerank_keep),
            ("answer_top_k", self.answer_top_k),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [("bm25_min_norm_score", self.bm25_min_norm_score), ("sigmoid_threshold", self.sigmoid_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.rrf_weights.len() != 2 {
            return Err(format!("rrf_weights needs 2 entries (lexical, dense), got {}", self.rrf_weights.len()));
        }
        if self.rrf_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.rrf_weights.iter().all(|w| *w == 0.0) {
            return Err("rrf_weights must be nonnegative and not all zero".into());
        }
        if !(self.rrf_k.is_finite() && self.rrf_k >= 0.0) {
            return Err("rrf_k must be a nonnegative number".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    QueryOptimization,
    Bm25,
    Dense,
    Fusion,
    Rerank,
    Strip,
    Filter,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::QueryOptimization => "query_optimization",
            Stage::Bm25 => "bm25",
            Stage::Dense => "dense",
            Stage::Fusion => "fusion",
            Stage::Rerank => "rerank",
            Stage::Strip => "strip",
            Stage::Filter => "filter",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("{stage} stage failed: {source}")]
    Upstream { stage: Stage, source: LlmError },
    #[error("{stage} stage failed: {source}")]
    Index { stage: Stage, source: IndexError },
    #[error("invalid retrieval config: {0}")]
    Config(String),
}

impl RetrievalError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            RetrievalError::Upstream { stage, .. } | RetrievalError::Index { stage, .. } => Some(*stage),
            RetrievalError::Config(_) => None,
        }
    }
}

/// A stripped span with its provenance and scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSpan {
    pub text: String,
    pub core_span: CharSpan,
    pub filename: String,
    pub node_path: Vec<String>,
    pub chunk_id: String,
    /// 1-based position in the fused list.
    pub fused_rank: usize,
    pub rerank_score_raw: f64,
    pub rerank_score_norm: f64,
}

/// Candidate counts after each stage. From `fused` on the sequence never
/// increases; `filtered` counts parent spans that yielded at least one
/// verified excerpt and equals `stripped` when filtering is off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTrace {
    pub bm25: usize,
    pub dense: usize,
    pub fused: usize,
    pub fused_top: usize,
    pub reranked: usize,
    pub stripped: usize,
    pub filtered: usize,
    pub sub_spans: usize,
}

impl StageTrace {
    pub fn monotone_sequence(&self) -> [usize; 5] {
        [self.fused, self.fused_top, self.reranked, self.stripped, self.filtered]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub search_query: String,
    pub spans: Vec<RetrievedSpan>,
    pub stage_trace: StageTrace,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanJson {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub filename: String,
    pub node_path: Vec<String>,
    pub fused_rank: usize,
    pub rerank_score_raw: f64,
    pub rerank_score_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalJson {
    pub query: String,
    pub search_query: String,
    pub spans: Vec<SpanJson>,
    pub stage_trace: StageTrace,
    pub warnings: Vec<String>,
}

impl RetrievalResult {
    pub fn to_json(&self) -> RetrievalJson {
        RetrievalJson {
            query: self.query.clone(),
            search_query: self.search_query.clone(),
            spans: self
                .spans
                .iter()
                .map(|s| SpanJson {
                    text: s.text.clone(),
                    start: s.core_span.start,
                    end: s.core_span.end,
                    filename: s.filename.clone(),
                    node_path: s.node_path.clone(),
                    fused_rank: s.fused_rank,
                    rerank_score_raw: s.rerank_score_raw,
                    rerank_score_norm: s.rerank_score_norm,
                })
                .collect(),
            stage_trace: self.stage_trace,
            warnings: self.warnings.clone(),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A fused candidate awaiting reranking.
#[derive(Debug, Clone)]
pub struct Candidate<'a> {
    pub chunk: &'a Chunk,
    pub fused_rank: usize,
}

#[derive(Debug, Clone)]
pub struct Scored<'a> {
    pub chunk: &'a Chunk,
    pub fused_rank: usize,
    pub raw: f64,
    pub norm: f64,
}

/// Score every candidate against the query, map through the sigmoid, drop
/// those under the threshold and keep at most `rerank_keep`, best first.
/// Equal scores keep fused order.
pub fn rerank_and_threshold<'a>(
    query: &str,
    candidates: &[Candidate<'a>],
    reranker: &dyn Reranker,
    config: &RetrievalConfig,
) -> Result<Vec<Scored<'a>>, RetrievalError> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let passages: Vec<String> = candidates.iter().map(|c| c.chunk.text.clone()).collect();
    let raw = reranker.score(query, &passages).map_err(|source| RetrievalError::Upstream { stage: Stage::Rerank, source })?;
    if raw.len() != candidates.len() {
        return Err(RetrievalError::Upstream {
            stage: Stage::Rerank,
            source: LlmError::Upstream(format!("reranker returned {} scores for {} passages", raw.len(), candidates.len())),
        });
    }
    let mut scored: Vec<Scored<'a>> = candidates
        .iter()
        .zip(raw)
        .map(|(c, r)| Scored { chunk: c.chunk, fused_rank: c.fused_rank, raw: r, norm: sigmoid(r) })
        .filter(|s| s.norm >= config.sigmoid_threshold)
        .collect();
    scored.sort_by(|a, b| b.raw.total_cmp(&a.raw).then(a.fused_rank.cmp(&b.fused_rank)));
    scored.truncate(config.rerank_keep);
    Ok(scored)
}

/// Full pipeline: one query-extraction call, then [`retrieve_prepared`].
/// An empty index returns an empty result without any model call.
pub fn retrieve(
    query: &str,
    index: &ChunkIndex,
    clients: &ClientSet,
    config: &RetrievalConfig,
) -> Result<RetrievalResult, RetrievalError> {
    config.validate().map_err(RetrievalError::Config)?;
    if index.is_empty() {
        return Ok(RetrievalResult { query: query.into(), search_query: query.into(), ..Default::default() });
    }
    let reply = clients
        .researcher
        .chat(
            CallRole::ResearcherQueryExtract,
            vec![Message::system(prompts::QUERY_EXTRACT_SYSTEM), Message::user(prompts::query_extract_user(query))],
        )
        .map_err(|source| RetrievalError::Upstream { stage: Stage::QueryOptimization, source })?;
    let search_query = match reply.trim() {
        "" => query.to_string(),
        q => q.to_string(),
    };
    retrieve_prepared(query, &search_query, index, clients, config)
}

/// Pipeline after query optimization. Retrievers see `search_query`; the
/// reranker and filter see the original `query`.
pub fn retrieve_prepared(
    query: &str,
    search_query: &str,
    index: &ChunkIndex,
    clients: &ClientSet,
    config: &RetrievalConfig,
) -> Result<RetrievalResult, RetrievalError> {
    config.validate().map_err(RetrievalError::Config)?;
    let mut result = RetrievalResult { query: query.into(), search_query: search_query.into(), ..Default::default() };
    if index.is_empty() {
        return Ok(result);
    }
    let trace = &mut result.stage_trace;

    let lexical = index
        .bm25_search(search_query, config.bm25_top_n, config.bm25_min_norm_score)
        .map_err(|source| RetrievalError::Index { stage: Stage::Bm25, source })?;
    trace.bm25 = lexical.len();

    let dense = if index.has_vectors() {
        let qv = clients.embedder.embed_one(search_query).map_err(|source| RetrievalError::Upstream { stage: Stage::Dense, source })?;
        index.dense_search(&qv, config.dense_top_n).map_err(|source| RetrievalError::Index { stage: Stage::Dense, source })?
    } else {
        Vec::new()
    };
    trace.dense = dense.len();

    let rankings = vec![lexical.iter().map(|h| h.chunk).collect::<Vec<_>>(), dense.iter().map(|h| h.chunk).collect()];
    let fused = rrf_fuse(&rankings, &config.rrf_weights, config.rrf_k);
    trace.fused = fused.len();
    let candidates: Vec<Candidate> = fused
        .iter()
        .take(config.fused_top_n)
        .enumerate()
        .map(|(i, (ord, _))| Candidate { chunk: index.chunk(*ord), fused_rank: i + 1 })
        .collect();
    trace.fused_top = candidates.len();

    let scored = rerank_and_threshold(query, &candidates, clients.reranker.as_ref(), config)?;
    trace.reranked = scored.len();

    let mut spans: Vec<RetrievedSpan> = Vec::new();
    for s in scored {
        if spans.iter().any(|x| x.filename == s.chunk.filename && x.core_span == s.chunk.core_span) {
            continue;
        }
        let text = index.strip_context(s.chunk).map_err(|source| RetrievalError::Index { stage: Stage::Strip, source })?;
        spans.push(RetrievedSpan {
            text,
            core_span: s.chunk.core_span,
            filename: s.chunk.filename.clone(),
            node_path: s.chunk.node_path.clone(),
            chunk_id: s.chunk.id.clone(),
            fused_rank: s.fused_rank,
            rerank_score_raw: s.raw,
            rerank_score_norm: s.norm,
        });
        if spans.len() == config.answer_top_k {
            break;
        }
    }
    trace.stripped = spans.len();

    if config.llm_filter {
        let (subs, warnings) = llm_filter(query, &spans, &clients.filter)?;
        trace.filtered = spans.iter().filter(|p| subs.iter().any(|s| s.chunk_id == p.chunk_id)).count();
        trace.sub_spans = subs.len();
        result.warnings.extend(warnings);
        result.spans = subs;
    } else {
        trace.filtered = spans.len();
        trace.sub_spans = spans.len();
        result.spans = spans;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::chunker::assemble_chunk_set;
    use crate::doctree::{parse_document, ParseOptions};
    use crate::llm::{HashEmbedder, LexicalReranker, ScriptedChat};

    const DOC: &str = "1. Definitions\n1.1 Seller means ACME Corp.\n1.2 Buyer means Beta LLC.\n2. Payment\n2.1 Buyer shall pay the invoice within thirty days.\n2.2 Late payment accrues interest.\n3. Warranty\n3.1 Seller warrants the goods are free of defects.\n4. Termination\n4.1 Either party may terminate with ninety days notice.\n5. Governing Law\n5.1 This agreement is governed by the laws of Delaware.";

    fn index() -> ChunkIndex {
        let tree = parse_document(DOC, "doc.txt", &ParseOptions::default());
        ChunkIndex::build(assemble_chunk_set(&tree), [("doc.txt".into(), DOC.into())], Some(&HashEmbedder::default()), "doc").unwrap()
    }

    fn offline() -> ClientSet {
        ClientSet::uniform(Arc::new(crate::llm::MockPipelineChat::default()), Arc::new(HashEmbedder::default()), Arc::new(LexicalReranker))
    }

    #[test]
    fn unique_match_is_first_and_one_call() {
        let idx = index();
        let clients = offline();
        let r = retrieve("Which state's laws govern the agreement?", &idx, &clients, &RetrievalConfig::default()).unwrap();
        assert_eq!(r.spans[0].text, "5.1 This agreement is governed by the laws of Delaware.");
        assert_eq!(clients.ledger.len(), 1);
        assert_eq!(clients.ledger.count(CallRole::ResearcherQueryExtract), 1);
        let seq = r.stage_trace.monotone_sequence();
        assert!(seq.windows(2).all(|w| w[0] >= w[1]), "{seq:?}");
        for s in &r.spans {
            assert_eq!(s.rerank_score_norm, sigmoid(s.rerank_score_raw));
        }
        assert!(r.spans.windows(2).all(|w| w[0].rerank_score_norm >= w[1].rerank_score_norm));
    }

    #[test]
    fn empty_index_is_empty_and_free() {
        let idx = ChunkIndex::build(vec![], [], Some(&HashEmbedder::default()), "").unwrap();
        let clients = offline();
        let r = retrieve("anything", &idx, &clients, &RetrievalConfig::default()).unwrap();
        assert!(r.spans.is_empty());
        assert_eq!(r.stage_trace, StageTrace::default());
        assert!(clients.ledger.is_empty());
    }

    #[test]
    fn sigmoid_threshold_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        struct Fixed;
        impl Reranker for Fixed {
            fn model_id(&self) -> &str {
                "fixed"
            }
            fn score(&self, _: &str, p: &[String]) -> Result<Vec<f64>, LlmError> {
                Ok(p.iter().map(|t| if t.contains("keep") { 2.0 } else { -2.0 }).collect())
            }
        }
        let idx = ChunkIndex::build(
            assemble_chunk_set(&parse_document("1. keep me\n2. drop me", "d", &ParseOptions::default())),
            [],
            None,
            "",
        )
        .unwrap();
        let cands: Vec<Candidate> = (0..idx.len()).map(|i| Candidate { chunk: idx.chunk(i), fused_rank: i + 1 }).collect();
        let out = rerank_and_threshold("q", &cands, &Fixed, &RetrievalConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].chunk.text.contains("keep"));
    }

    #[test]
    fn rerank_failure_names_stage() {
        struct Down;
        impl Reranker for Down {
            fn model_id(&self) -> &str {
                "down"
            }
            fn score(&self, _: &str, _: &[String]) -> Result<Vec<f64>, LlmError> {
                Err(LlmError::Upstream("503".into()))
            }
        }
        let mut clients = offline();
        clients.reranker = Arc::new(Down);
        let err = retrieve("governing law", &index(), &clients, &RetrievalConfig::default()).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Rerank));
    }

    #[test]
    fn ancestor_chunk_strips_to_node_text() {
        let idx = index();
        let a = idx.chunks().iter().find(|c| c.kind == crate::chunker::ChunkKind::AncestorAware && c.node_path == ["2.", "2.1"]).unwrap();
        let n = idx.chunks().iter().find(|c| c.kind == crate::chunker::ChunkKind::NodeLevel && c.node_path == ["2.", "2.1"]).unwrap();
        let s = idx.strip_context(a).unwrap();
        assert_eq!(s, "2.1 Buyer shall pay the invoice within thirty days.");
        assert_eq!(s, idx.strip_context(n).unwrap());
    }

    #[test]
    fn filter_variant_reports_sub_spans() {
        let idx = index();
        let mut clients = offline();
        let ledger = clients.ledger.clone();
        clients.filter = crate::llm::Gateway::new(
            Arc::new(ScriptedChat::new(std::iter::repeat_n("governed by the laws of Delaware", 10))),
            crate::llm::ProviderProfile::offline("f"),
            ledger,
        );
        let config = RetrievalConfig { llm_filter: true, answer_top_k: 2, ..Default::default() };
        let r = retrieve("Which laws govern the agreement?", &idx, &clients, &config).unwrap();
        assert_eq!(r.spans[0].text, "governed by the laws of Delaware");
        assert!(r.stage_trace.filtered <= r.stage_trace.stripped);
    }

    #[test]
    fn config_validation() {
        assert!(RetrievalConfig::default().validate().is_ok());
        assert!(RetrievalConfig { rrf_weights: vec![0.0, 0.0], ..Default::default() }.validate().is_err());
        assert!(RetrievalConfig { answer_top_k: 0, ..Default::default() }.validate().is_err());
        assert!(RetrievalConfig { sigmoid_threshold: 1.5, ..Default::default() }.validate().is_err());
    }
}
