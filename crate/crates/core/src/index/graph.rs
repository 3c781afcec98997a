//! Composable multi-index graph for cross-document retrieval.
//!
//! Each node carries a short description. Queries descend from the root,
//! picking at every level the child whose description embedding is closest
//! to the query, until a leaf index is reached.

use std::sync::Arc;

use super::{cosine, ChunkIndex, IndexError};
use crate::chunker::Chunk;
use crate::llm::Embedder;

#[derive(Debug, Clone)]
pub enum GraphNode {
    Branch { descriptor: String, label: Option<String>, embedding: Vec<f32>, children: Vec<GraphNode> },
    Leaf { descriptor: String, label: Option<String>, embedding: Vec<f32>, index: Arc<ChunkIndex> },
}

impl GraphNode {
    pub fn leaf(descriptor: impl Into<String>, label: Option<String>, index: Arc<ChunkIndex>) -> Self {
        GraphNode::Leaf { descriptor: descriptor.into(), label, embedding: Vec::new(), index }
    }

    pub fn branch(descriptor: impl Into<String>, children: Vec<GraphNode>) -> Self {
        GraphNode::Branch { descriptor: descriptor.into(), label: None, embedding: Vec::new(), children }
    }

    pub fn descriptor(&self) -> &str {
        match self {
            GraphNode::Branch { descriptor, .. } | GraphNode::Leaf { descriptor, .. } => descriptor,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            GraphNode::Branch { label, .. } | GraphNode::Leaf { label, .. } => label.as_deref(),
        }
    }

    fn embedding(&self) -> &[f32] {
        match self {
            GraphNode::Branch { embedding, .. } | GraphNode::Leaf { embedding, .. } => embedding,
        }
    }

    fn embed_all(&mut self, embedder: &dyn Embedder) -> Result<(), IndexError> {
        if self.descriptor().trim().is_empty() {
            return Err(IndexError::InvalidParameter("every graph node needs a descriptor".into()));
        }
        let v = embedder.embed_one(self.descriptor())?;
        match self {
            GraphNode::Branch { embedding, children, .. } => {
                *embedding = v;
                for c in children {
                    c.embed_all(embedder)?;
                }
            }
            GraphNode::Leaf { embedding, .. } => *embedding = v,
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CorpusGraph {
    root: GraphNode,
}

impl CorpusGraph {
    /// Embeds every descriptor up front so routing needs no further calls.
    pub fn new(mut root: GraphNode, embedder: &dyn Embedder) -> Result<Self, IndexError> {
        if let GraphNode::Branch { children, .. } = &root {
            if children.is_empty() {
                return Err(IndexError::EmptyGraph);
            }
        }
        root.embed_all(embedder)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &GraphNode {
        &self.root
    }
}

/// Where routing ended and what it took to get there.
#[derive(Debug, Clone)]
pub struct Route<'g> {
    pub leaf: &'g ChunkIndex,
    pub leaf_label: Option<&'g str>,
    /// Descriptors chosen at each level, outermost first.
    pub path: Vec<&'g str>,
    /// One per level descended.
    pub comparisons: usize,
}

pub fn route_query<'g>(graph: &'g CorpusGraph, query: &[f32]) -> Result<Route<'g>, IndexError> {
    let mut node = &graph.root;
    let mut path = Vec::new();
    let mut comparisons = 0;
    loop {
        match node {
            GraphNode::Leaf { index, label, .. } => {
                return Ok(Route { leaf: index, leaf_label: label.as_deref(), path, comparisons });
            }
            GraphNode::Branch { children, .. } => {
                let mut best: Option<(&GraphNode, f64)> = None;
                for c in children {
                    if c.embedding().len() != query.len() {
                        return Err(IndexError::DimensionMismatch { expected: c.embedding().len(), got: query.len() });
                    }
                    let s = cosine(query, c.embedding());
                    if best.is_none_or(|(_, b)| s > b) {
                        best = Some((c, s));
                    }
                }
                let (next, _) = best.ok_or(IndexError::EmptyGraph)?;
                comparisons += 1;
                path.push(next.descriptor());
                node = next;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub chunk: Chunk,
    pub label: Option<String>,
    pub score: f64,
}

pub const DEFAULT_EXAMPLES: usize = 3;

/// Route the query, then return the closest `top_k` examples of the chosen
/// leaf with their labels (per-chunk label, else the leaf's own label).
pub fn cross_document_examples(
    graph: &CorpusGraph,
    embedder: &dyn Embedder,
    query: &str,
    top_k: usize,
) -> Result<Vec<LabeledExample>, IndexError> {
    let qv = embedder.embed_one(query)?;
    let route = route_query(graph, &qv)?;
    if route.leaf.is_empty() {
        return Ok(Vec::new());
    }
    let hits = route.leaf.dense_search(&qv, top_k.max(1))?;
    Ok(hits
        .into_iter()
        .map(|h| {
            let chunk = route.leaf.chunk(h.chunk).clone();
            let label = route.leaf.label(&chunk.id).or(route.leaf_label).map(str::to_string);
            LabeledExample { chunk, label, score: h.score }
        })
        .collect())
}
