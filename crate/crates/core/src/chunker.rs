//! Contextual chunks over a section tree.
//!
//! Every non-root node yields up to three chunks: its own text, its text
//! prefixed by its ancestors, and its text followed by its descendants. The
//! core span always points at the originating node, so stripping context
//! later recovers exactly the node's text.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::doctree::{DocumentTree, NodeId};
use crate::index::cosine;
use crate::llm::{Embedder, LlmError};
use crate::span::{dedup_key, CharSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkKind {
    NodeLevel,
    AncestorAware,
    DescendantAware,
}

impl ChunkKind {
    pub const ALL: [ChunkKind; 3] = [ChunkKind::NodeLevel, ChunkKind::AncestorAware, ChunkKind::DescendantAware];

    fn code(self) -> &'static str {
        match self {
            ChunkKind::NodeLevel => "n",
            ChunkKind::AncestorAware => "a",
            ChunkKind::DescendantAware => "d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ChunkRecord", from = "ChunkRecord")]
pub struct Chunk {
    pub id: String,
    pub kind: ChunkKind,
    pub text: String,
    pub core_span: CharSpan,
    pub node_path: Vec<String>,
    pub doc_position: usize,
    pub filename: String,
    pub summary: Option<String>,
}

/// Flat wire form used by the JSONL export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub id: String,
    pub kind: ChunkKind,
    pub text: String,
    pub core_start: usize,
    pub core_end: usize,
    pub node_path: Vec<String>,
    pub doc_position: usize,
    pub filename: String,
    pub summary: Option<String>,
}

impl From<Chunk> for ChunkRecord {
    fn from(c: Chunk) -> Self {
        ChunkRecord {
            id: c.id,
            kind: c.kind,
            text: c.text,
            core_start: c.core_span.start,
            core_end: c.core_span.end,
            node_path: c.node_path,
            doc_position: c.doc_position,
            filename: c.filename,
            summary: c.summary,
        }
    }
}

impl From<ChunkRecord> for Chunk {
    fn from(r: ChunkRecord) -> Self {
        Chunk {
            id: r.id,
            kind: r.kind,
            text: r.text,
            core_span: CharSpan::new(r.core_start, r.core_end),
            node_path: r.node_path,
            doc_position: r.doc_position,
            filename: r.filename,
            summary: r.summary,
        }
    }
}

fn chunk_id(filename: &str, position: usize, kind: ChunkKind) -> String {
    format!("{filename}#{position}{}", kind.code())
}

fn chunk_for(tree: &DocumentTree, id: NodeId, kind: ChunkKind) -> Option<Chunk> {
    let node = tree.node(id);
    let parts: Vec<&str> = match kind {
        ChunkKind::NodeLevel => vec![node.text.as_str()],
        ChunkKind::AncestorAware => tree
            .ancestors(id)
            .into_iter()
            .map(|a| tree.node(a).text.as_str())
            .chain(std::iter::once(node.text.as_str()))
            .collect(),
        ChunkKind::DescendantAware => std::iter::once(node.text.as_str())
            .chain(tree.descendants(id).into_iter().map(|d| tree.node(d).text.as_str()))
            .collect(),
    };
    let parts: Vec<&str> = parts.into_iter().filter(|p| !p.trim().is_empty()).collect();
    if parts.is_empty() {
        return None;
    }
    Some(Chunk {
        id: chunk_id(&tree.filename, id.0, kind),
        kind,
        text: parts.join("\n"),
        core_span: node.span,
        node_path: tree.node_path(id),
        doc_position: id.0,
        filename: tree.filename.clone(),
        summary: tree.summary.clone(),
    })
}

/// One chunk of `kind` per non-root node, in document order.
pub fn make_chunks(tree: &DocumentTree, kind: ChunkKind) -> Vec<Chunk> {
    tree.sections().filter_map(|n| chunk_for(tree, n.id, kind)).collect()
}

/// Drop chunks whose normalized text was already seen, scanning in order.
/// A node-level chunk is only dropped when an earlier chunk of the same
/// node has the same text, so every node keeps a chunk addressing it.
pub fn dedup_chunks(chunks: Vec<Chunk>) -> Vec<Chunk> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut own_seen: HashSet<(usize, String)> = HashSet::new();
    let mut out = Vec::with_capacity(chunks.len());
    for c in chunks {
        let key = dedup_key(&c.text);
        let own = (c.doc_position, key.clone());
        let keep = match c.kind {
            ChunkKind::NodeLevel => !own_seen.contains(&own),
            _ => !seen.contains(&key),
        };
        if keep {
            seen.insert(key);
            own_seen.insert(own);
            out.push(c);
        }
    }
    out
}

/// Union of the three chunk kinds, deduplicated, ordered by document
/// position and then kind.
pub fn assemble_chunk_set(tree: &DocumentTree) -> Vec<Chunk> {
    let mut all = Vec::new();
    for node in tree.sections() {
        for kind in ChunkKind::ALL {
            all.extend(chunk_for(tree, node.id, kind));
        }
    }
    dedup_chunks(all)
}

pub const DEFAULT_COSINE_DEDUP: f32 = 0.98;

/// Optional near-duplicate pass: a chunk is dropped when its embedding has
/// cosine at or above `threshold` with an earlier survivor. Node-level
/// chunks are kept unless the near duplicate belongs to the same node.
pub fn dedup_by_cosine(chunks: Vec<Chunk>, embedder: &dyn Embedder, threshold: f32) -> Result<Vec<Chunk>, LlmError> {
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let vectors = embedder.embed(&texts)?;
    let mut kept: Vec<(usize, Vec<f32>)> = Vec::new();
    let mut out = Vec::new();
    for (c, v) in chunks.into_iter().zip(vectors) {
        let dup = kept.iter().any(|(pos, k)| {
            (c.kind != ChunkKind::NodeLevel || *pos == c.doc_position) && cosine(k, &v) >= f64::from(threshold)
        });
        if !dup {
            kept.push((c.doc_position, v));
            out.push(c);
        }
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(chunks: &[Chunk], mut out: W) -> io::Result<()> {
    for c in chunks {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<Chunk>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}
