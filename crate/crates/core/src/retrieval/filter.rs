//! Sub-span extraction from top passages.

use super::{RetrievalError, RetrievedSpan, Stage};
use crate::agents::prompts;
use crate::llm::{CallRole, Gateway, Message};
use crate::span::CharSpan;

/// Ask the model for the relevant sentences of each span (one call per
/// span). Every returned excerpt must occur verbatim in its parent;
/// anything else is dropped with a warning. Output follows parent order.
pub fn llm_filter(
    query: &str,
    spans: &[RetrievedSpan],
    chat: &Gateway,
) -> Result<(Vec<RetrievedSpan>, Vec<String>), RetrievalError> {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for parent in spans {
        let reply = chat
            .chat(CallRole::Filter, vec![Message::system(prompts::FILTER_SYSTEM), Message::user(prompts::filter_user(query, &parent.text))])
            .map_err(|source| RetrievalError::Upstream { stage: Stage::Filter, source })?;
        let mut found: Vec<RetrievedSpan> = Vec::new();
        for line in reply.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if line.eq_ignore_ascii_case("none") {
                continue;
            }
            let excerpt = line.trim_matches('"');
            match parent.text.find(excerpt) {
                Some(byte) => {
                    let start = parent.core_span.start + parent.text[..byte].chars().count();
                    let span = CharSpan::new(start, start + excerpt.chars().count());
                    if !found.iter().any(|f| f.core_span == span) {
                        found.push(RetrievedSpan { text: excerpt.to_string(), core_span: span, ..parent.clone() });
                    }
                }
                None => warnings.push(format!(
                    "filter excerpt not found verbatim in {} [{}, {}): {:?}",
                    parent.filename, parent.core_span.start, parent.core_span.end, excerpt
                )),
            }
        }
        out.extend(found);
    }
    Ok((out, warnings))
}
