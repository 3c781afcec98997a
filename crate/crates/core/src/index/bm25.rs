use std::collections::BTreeMap;

use super::{ChunkIndex, Hit, IndexError};
use crate::chunker::Chunk;
use crate::tokenize::tokenize;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: BM25_K1, b: BM25_B }
    }
}

pub(crate) type Postings = BTreeMap<String, Vec<(u32, u32)>>;

pub(crate) fn build_postings(chunks: &[Chunk]) -> (Postings, Vec<u32>) {
    let mut postings: Postings = BTreeMap::new();
    let mut lens = Vec::with_capacity(chunks.len());
    for (i, c) in chunks.iter().enumerate() {
        let tokens = tokenize(&c.text);
        lens.push(tokens.len() as u32);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (t, n) in tf {
            postings.entry(t).or_default().push((i as u32, n));
        }
    }
    (postings, lens)
}

impl ChunkIndex {
    fn avg_len(&self) -> f64 {
        if self.doc_lens.is_empty() {
            return 0.0;
        }
        self.doc_lens.iter().map(|l| f64::from(*l)).sum::<f64>() / self.doc_lens.len() as f64
    }

    /// Raw BM25 score of every chunk containing at least one query term.
    /// Repeated query tokens contribute once per occurrence.
    pub fn bm25_scores(&self, query: &str, params: Bm25Params) -> Vec<Hit> {
        let n = self.doc_lens.len() as f64;
        let avgdl = self.avg_len();
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for term in tokenize(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let df = list.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let len = f64::from(self.doc_lens[doc as usize]);
                let w = idf * (tf * (params.k1 + 1.0)) / (tf + params.k1 * (1.0 - params.b + params.b * len / avgdl));
                *acc.entry(doc).or_insert(0.0) += w;
            }
        }
        acc.into_iter().map(|(doc, score)| Hit { chunk: doc as usize, score }).collect()
    }

    /// Top `top_n` chunks by raw BM25. Scores are min-max normalized over
    /// those candidates and hits below `min_norm_score` are dropped; when all
    /// candidates score the same each normalizes to 1. Returned scores are raw.
    pub fn bm25_search(&self, query: &str, top_n: usize, min_norm_score: f64) -> Result<Vec<Hit>, IndexError> {
        self.bm25_search_with(query, top_n, min_norm_score, Bm25Params::default())
    }

    pub fn bm25_search_with(
        &self,
        query: &str,
        top_n: usize,
        min_norm_score: f64,
        params: Bm25Params,
    ) -> Result<Vec<Hit>, IndexError> {
        if top_n == 0 {
            return Err(IndexError::InvalidParameter("top_n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&min_norm_score) {
            return Err(IndexError::InvalidParameter(format!("min_norm_score {min_norm_score} outside [0, 1]")));
        }
        let mut hits = self.bm25_scores(query, params);
        self.rank(&mut hits);
        hits.truncate(top_n);
        let (Some(max), Some(min)) = (hits.first().map(|h| h.score), hits.last().map(|h| h.score)) else {
            return Ok(hits);
        };
        let range = max - min;
        hits.retain(|h| {
            let norm = if range > 0.0 { (h.score - min) / range } else { 1.0 };
            norm >= min_norm_score
        });
        Ok(hits)
    }
}
