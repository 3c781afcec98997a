//! Document ingestion: parse, optionally summarize, chunk and index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::{assemble_chunk_set, dedup_by_cosine, Chunk};
use crate::doctree::{parse_document, parse_document_with_llm, summarize_document, DocumentTree, ParseOptions};
use crate::index::{ChunkIndex, IndexError};
use crate::llm::{ClientSet, LlmError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct IngestOptions {
    #[serde(skip)]
    pub parse: ParseOptions,
    /// Segment with a model call instead of structural cues.
    pub llm_parsing: bool,
    /// Ask the model for a contract-level summary stored on every chunk.
    pub summarize: bool,
    /// Near-duplicate threshold; `None` keeps exact-text dedup only.
    pub cosine_dedup: Option<f32>,
}


#[derive(Debug, Error)]
pub enum IngestError {
    #[error("parsing failed: {0}")]
    Parse(LlmError),
    #[error("chunk dedup failed: {0}")]
    Dedup(LlmError),
    #[error("indexing failed: {0}")]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone)]
pub struct IngestedDocument {
    pub tree: DocumentTree,
    pub chunks: Vec<Chunk>,
    pub index: ChunkIndex,
}

/// Build tree, chunk set and index for one document. A failed summary
/// call is recorded as a tree warning and ingestion goes on without it.
pub fn ingest(text: &str, filename: &str, options: &IngestOptions, clients: &ClientSet) -> Result<IngestedDocument, IngestError> {
    let mut tree = if options.llm_parsing {
        parse_document_with_llm(text, filename, &options.parse, &clients.archivist).map_err(IngestError::Parse)?
    } else {
        parse_document(text, filename, &options.parse)
    };
    if options.summarize {
        match summarize_document(&tree, &clients.archivist) {
            Ok(t) => tree = t,
            Err(e) => tree.warnings.push(format!("summary unavailable: {e}")),
        }
    }
    let mut chunks = assemble_chunk_set(&tree);
    if let Some(threshold) = options.cosine_dedup {
        chunks = dedup_by_cosine(chunks, clients.embedder.as_ref(), threshold).map_err(IngestError::Dedup)?;
    }
    let descriptor = tree.summary.clone().unwrap_or_else(|| format!("Clauses of {filename}"));
    let index = ChunkIndex::build(chunks.clone(), [(filename.to_string(), text.to_string())], Some(clients.embedder.as_ref()), descriptor)?;
    Ok(IngestedDocument { tree, chunks, index })
}
