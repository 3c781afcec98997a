//! Lexical tokenizer shared by BM25, the hash embedder and the lexical reranker.

/// Lowercase tokens split on Unicode alphanumeric boundaries. No stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}
