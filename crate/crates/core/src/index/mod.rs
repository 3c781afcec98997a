//! Lexical and dense indices over chunk sets.
//!
//! A [`ChunkIndex`] is built once from chunks (plus the source texts the
//! chunks point into) and is read-only afterwards, so it can be shared
//! across threads behind an `Arc`. Search is exhaustive in both modes.

mod bm25;
mod graph;
mod persist;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

pub use bm25::{Bm25Params, BM25_B, BM25_K1};
pub use graph::{cross_document_examples, route_query, CorpusGraph, GraphNode, LabeledExample, Route, DEFAULT_EXAMPLES};

use crate::chunker::Chunk;
use crate::llm::{Embedder, LlmError};
use crate::span::slice_chars;

pub const DEFAULT_TOP_N: usize = 100;
pub const DEFAULT_MIN_NORM_SCORE: f64 = 0.6;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("query vector has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index has no vectors")]
    NoVectors,
    #[error("corpus graph is empty")]
    EmptyGraph,
    #[error("invalid search parameter: {0}")]
    InvalidParameter(String),
    #[error("span {start}..{end} is outside {filename}")]
    SpanOutOfBounds { filename: String, start: usize, end: usize },
    #[error("unknown source document {0}")]
    UnknownSource(String),
    #[error("embedding failed: {0}")]
    Embed(#[from] LlmError),
    #[error("index file is malformed: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One search hit: position of the chunk in [`ChunkIndex::chunks`] and its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub chunk: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkIndex {
    pub(crate) chunks: Vec<Chunk>,
    /// term -> (chunk ordinal, term frequency), ordinals ascending
    pub(crate) postings: BTreeMap<String, Vec<(u32, u32)>>,
    pub(crate) doc_lens: Vec<u32>,
    pub(crate) vectors: Option<Vec<Vec<f32>>>,
    pub(crate) dim: usize,
    pub(crate) descriptor: String,
    pub(crate) embed_model_id: String,
    /// filename -> full source text
    pub(crate) sources: BTreeMap<String, String>,
    /// chunk id -> example label, for labeled example collections
    pub(crate) labels: BTreeMap<String, String>,
}

impl ChunkIndex {
    /// Build postings (and vectors when an embedder is given). `sources`
    /// maps each chunk filename to the text its spans address.
    pub fn build(
        chunks: Vec<Chunk>,
        sources: impl IntoIterator<Item = (String, String)>,
        embedder: Option<&dyn Embedder>,
        descriptor: impl Into<String>,
    ) -> Result<Self, IndexError> {
        let sources: BTreeMap<String, String> = sources.into_iter().collect();
        let (postings, doc_lens) = bm25::build_postings(&chunks);
        let (vectors, dim, embed_model_id) = match embedder {
            Some(e) if !chunks.is_empty() => {
                let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
                let vectors = e.embed(&texts)?;
                if vectors.len() != chunks.len() {
                    return Err(IndexError::Format(format!("embedder returned {} vectors for {} chunks", vectors.len(), chunks.len())));
                }
                if let Some(bad) = vectors.iter().find(|v| v.len() != e.dim()) {
                    return Err(IndexError::DimensionMismatch { expected: e.dim(), got: bad.len() });
                }
                (Some(vectors), e.dim(), e.model_id().to_string())
            }
            Some(e) => (Some(Vec::new()), e.dim(), e.model_id().to_string()),
            None => (None, 0, String::new()),
        };
        Ok(Self {
            chunks,
            postings,
            doc_lens,
            vectors,
            dim,
            descriptor: descriptor.into(),
            embed_model_id,
            sources,
            labels: BTreeMap::new(),
        })
    }

    /// Attach example labels keyed by chunk id.
    pub fn with_labels(mut self, labels: impl IntoIterator<Item = (String, String)>) -> Self {
        self.labels.extend(labels);
        self
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, ordinal: usize) -> &Chunk {
        &self.chunks[ordinal]
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_vectors(&self) -> bool {
        self.vectors.is_some()
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn embed_model_id(&self) -> &str {
        &self.embed_model_id
    }

    pub fn label(&self, chunk_id: &str) -> Option<&str> {
        self.labels.get(chunk_id).map(String::as_str)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn source(&self, filename: &str) -> Option<&str> {
        self.sources.get(filename).map(String::as_str)
    }

    /// Source text at the chunk's core span, without any context.
    pub fn strip_context(&self, chunk: &Chunk) -> Result<String, IndexError> {
        let src = self.source(&chunk.filename).ok_or_else(|| IndexError::UnknownSource(chunk.filename.clone()))?;
        slice_chars(src, chunk.core_span).map(str::to_string).ok_or_else(|| IndexError::SpanOutOfBounds {
            filename: chunk.filename.clone(),
            start: chunk.core_span.start,
            end: chunk.core_span.end,
        })
    }

    /// Descending score; ties by ascending doc_position, then chunk id.
    pub(crate) fn rank(&self, hits: &mut [Hit]) {
        hits.sort_by(|a, b| {
            b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| {
                let (ca, cb) = (&self.chunks[a.chunk], &self.chunks[b.chunk]);
                ca.doc_position.cmp(&cb.doc_position).then_with(|| ca.id.cmp(&cb.id))
            })
        });
    }

    /// Exact cosine search over every stored vector.
    pub fn dense_search(&self, query: &[f32], top_n: usize) -> Result<Vec<Hit>, IndexError> {
        if top_n == 0 {
            return Err(IndexError::InvalidParameter("top_n must be at least 1".into()));
        }
        let vectors = self.vectors.as_ref().ok_or(IndexError::NoVectors)?;
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, got: query.len() });
        }
        let mut hits: Vec<Hit> = vectors.iter().enumerate().map(|(i, v)| Hit { chunk: i, score: cosine(query, v) }).collect();
        self.rank(&mut hits);
        hits.truncate(top_n);
        Ok(hits)
    }
}

/// Cosine similarity accumulated in f64. A vector compared with itself
/// scores exactly 1.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb).sqrt()
    }
}
