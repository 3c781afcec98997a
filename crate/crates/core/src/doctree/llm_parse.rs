//! Zero-shot model-based section parsing.
//!
//! The model sees the document as numbered lines and answers with a JSON
//! array of `{"line": n, "depth": d, "kind": "...", "label": "..."}`
//! entries, one per section start. Anything unusable falls back to the
//! cue-based parser.

use serde::Deserialize;

use super::build::build_from_depths;
use super::{parse_document, DocumentTree, NodeKind, ParseOptions, SectionBoundary};
use crate::agents::prompts;
use crate::doctree::Cue;
use crate::llm::{CallRole, Gateway, LlmError, Message};
use crate::span::CharSpan;

#[derive(Debug, Deserialize)]
struct LlmSection {
    line: usize,
    #[serde(default = "one")]
    depth: usize,
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    label: Option<String>,
}

fn one() -> usize {
    1
}

struct Line {
    start: usize,
    end: usize,
    blank: bool,
}

fn lines_of(text: &str) -> Vec<Line> {
    let mut out = Vec::new();
    let mut pos = 0;
    for raw in text.split_inclusive('\n') {
        let n = raw.chars().count();
        let body = raw.trim_end_matches(['\n', '\r']);
        let lead = body.chars().take_while(|c| c.is_whitespace()).count();
        let trimmed = body.trim();
        out.push(Line { start: pos + lead, end: pos + lead + trimmed.chars().count(), blank: trimmed.is_empty() });
        pos += n;
    }
    out
}

fn parse_kind(k: Option<&str>) -> NodeKind {
    match k.map(|s| s.to_ascii_lowercase()) {
        Some(s) if s == "title" || s == "heading" => NodeKind::Title,
        Some(s) if s == "clause" => NodeKind::Clause,
        Some(s) if s == "list_item" || s == "list" => NodeKind::ListItem,
        _ => NodeKind::Paragraph,
    }
}

fn extract_json_array(text: &str) -> Option<&str> {
    let s = text.find('[')?;
    let e = text.rfind(']')?;
    (e > s).then(|| &text[s..=e])
}

fn sections_from_reply(reply: &str, lines: &[Line]) -> Option<Vec<(SectionBoundary, usize)>> {
    let mut parsed: Vec<LlmSection> = serde_json::from_str(extract_json_array(reply)?).ok()?;
    parsed.retain(|s| s.line >= 1 && s.line <= lines.len() && !lines[s.line - 1].blank);
    parsed.sort_by_key(|s| s.line);
    parsed.dedup_by_key(|s| s.line);
    if parsed.len() < 2 {
        return None;
    }
    let mut out = Vec::new();
    // text ahead of the first listed section becomes a leading paragraph
    let first_line = parsed[0].line - 1;
    let mut starts: Vec<(usize, Option<&LlmSection>)> = Vec::new();
    if let Some(pre) = lines[..first_line].iter().position(|l| !l.blank) {
        starts.push((pre, None));
    }
    starts.extend(parsed.iter().map(|s| (s.line - 1, Some(s))));
    for (k, (line_idx, sec)) in starts.iter().enumerate() {
        let stop = starts.get(k + 1).map(|(l, _)| *l).unwrap_or(lines.len());
        let last = (*line_idx..stop).rev().find(|i| !lines[*i].blank)?;
        let span = CharSpan::new(lines[*line_idx].start, lines[last].end);
        let (kind, label, depth) = match sec {
            Some(s) => (parse_kind(s.kind.as_deref()), s.label.clone().filter(|l| !l.is_empty()), s.depth),
            None => (NodeKind::Paragraph, None, 1),
        };
        out.push((SectionBoundary { span, kind, label, cue: Cue::Paragraph, indent: 0 }, depth));
    }
    Some(out)
}

/// Parse with one model call (ledger role `llm_parse`). The structural
/// parser takes over when the reply cannot be used; model errors propagate.
pub fn parse_document_with_llm(
    raw: &str,
    filename: &str,
    options: &ParseOptions,
    chat: &Gateway,
) -> Result<DocumentTree, LlmError> {
    let lines = lines_of(raw);
    let numbered: String = raw
        .split_inclusive('\n')
        .enumerate()
        .map(|(i, l)| format!("L{}: {}\n", i + 1, l.trim_end_matches(['\n', '\r'])))
        .collect();
    let reply = chat.chat(
        CallRole::LlmParse,
        vec![Message::system(prompts::PARSE_SYSTEM), Message::user(prompts::parse_user(&numbered))],
    )?;
    let mut tree = match sections_from_reply(&reply, &lines) {
        Some(sections) => build_from_depths(&sections, raw),
        None => {
            let mut t = parse_document(raw, filename, options);
            t.warnings.push("model-based parsing returned no usable sections; used structural cues".into());
            t
        }
    };
    tree.filename = filename.to_string();
    Ok(tree)
}
