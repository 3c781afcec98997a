//! Contract question answering over hierarchically parsed documents.

pub mod agents;
pub mod chunker;
pub mod doctree;
pub mod eval;
pub mod index;
pub mod interface;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod span;
pub mod tokenize;
