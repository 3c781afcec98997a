//! Contract text to section tree.
//!
//! Parsing runs in two steps: [`detect_sections`] finds cue-bearing blocks
//! (numbering, headings, indentation), then [`build_hierarchy`] nests them.
//! Input with fewer than two cue-bearing sections is split into flat
//! fixed-size windows instead.

mod build;
mod detect;
mod llm_parse;

use serde::{Deserialize, Serialize};

pub use build::{build_flat, build_hierarchy};
pub use detect::{
    default_numbering_rules, detect_sections, Cue, EnumStyle, NodeKind, NumberingRule, ParseOptions, SectionBoundary,
};
pub use llm_parse::parse_document_with_llm;

use crate::agents::prompts;
use crate::llm::{CallRole, Gateway, LlmError, Message};
use crate::span::{normalize_whitespace, CharSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: Option<String>,
    /// The node's own text, without descendants.
    pub text: String,
    pub span: CharSpan,
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    Structural,
    FallbackFlat,
}

/// Immutable section tree over one source document. Node ids are assigned
/// in document order, so `nodes[i].id == NodeId(i)` and ascending ids are
/// ascending positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentTree {
    pub root: NodeId,
    pub nodes: Vec<SectionNode>,
    pub filename: String,
    pub source_text: String,
    pub summary: Option<String>,
    pub parse_mode: ParseMode,
    pub warnings: Vec<String>,
}

impl DocumentTree {
    pub fn node(&self, id: NodeId) -> &SectionNode {
        &self.nodes[id.0]
    }

    /// Non-root nodes in document order.
    pub fn sections(&self) -> impl Iterator<Item = &SectionNode> {
        self.nodes.iter().filter(|n| n.kind != NodeKind::Root)
    }

    pub fn section_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Ancestors from the outermost non-root ancestor down to the parent.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.node(id).parent;
        while let Some(p) = cur {
            if p == self.root {
                break;
            }
            out.push(p);
            cur = self.node(p).parent;
        }
        out.reverse();
        out
    }

    /// All descendants in document order (pre-order).
    pub fn descendants(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.node(id).children.iter().rev().copied().collect();
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.node(n).children.iter().rev().copied());
        }
        out
    }

    /// Labels from the outermost ancestor down to the node itself; unlabeled
    /// sections contribute an empty string.
    pub fn node_path(&self, id: NodeId) -> Vec<String> {
        self.ancestors(id)
            .into_iter()
            .chain(std::iter::once(id))
            .map(|n| self.node(n).label.clone().unwrap_or_default())
            .collect()
    }

    /// Check every structural invariant; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let root = self.nodes.first().ok_or("tree has no nodes")?;
        if root.depth != 0 || root.label.is_some() || root.parent.is_some() || self.root != NodeId(0) {
            return Err("root must be node 0 with depth 0, no label and no parent".into());
        }
        if let Some(s) = &self.summary {
            if s.trim().is_empty() {
                return Err("summary, when present, must be nonempty".into());
            }
        }
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != NodeId(i) {
                return Err(format!("node at {i} has id {:?}", n.id));
            }
            let mut prev_end = n.span.start;
            for (k, c) in n.children.iter().enumerate() {
                let child = self.nodes.get(c.0).ok_or(format!("dangling child {c:?}"))?;
                if child.parent != Some(n.id) {
                    return Err(format!("{c:?} does not point back to parent {:?}", n.id));
                }
                if child.depth != n.depth + 1 {
                    return Err(format!("{c:?} depth {} under parent depth {}", child.depth, n.depth));
                }
                if seen[c.0] {
                    return Err(format!("{c:?} reachable twice"));
                }
                seen[c.0] = true;
                let inside = n.span.contains(&child.span);
                let after = child.span.start >= n.span.end;
                if n.kind != NodeKind::Root && !(inside || after) {
                    return Err(format!("{c:?} span {:?} neither inside nor after parent {:?}", child.span, n.span));
                }
                if k > 0 && child.span.start < prev_end {
                    return Err(format!("sibling spans overlap or descend at {c:?}"));
                }
                prev_end = child.span.end;
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(format!("node {orphan} is not reachable from root"));
        }
        Ok(())
    }

    /// Normalized concatenation of every section's own text in document order.
    pub fn normalized_concatenation(&self) -> String {
        let parts: Vec<&str> = self.sections().map(|n| n.text.as_str()).collect();
        normalize_whitespace(&parts.join(" "))
    }

    pub fn to_json(&self) -> TreeJson {
        TreeJson {
            filename: self.filename.clone(),
            parse_mode: self.parse_mode,
            summary: self.summary.clone(),
            warnings: self.warnings.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id.0,
                    kind: n.kind,
                    label: n.label.clone(),
                    span: n.span,
                    depth: n.depth,
                    parent: n.parent.map(|p| p.0),
                })
                .collect(),
        }
    }
}

/// Serialized tree: fields appear in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub filename: String,
    pub parse_mode: ParseMode,
    pub summary: Option<String>,
    pub warnings: Vec<String>,
    pub nodes: Vec<NodeJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: usize,
    pub kind: NodeKind,
    pub label: Option<String>,
    pub span: CharSpan,
    pub depth: usize,
    pub parent: Option<usize>,
}

/// Parse with structural cues, falling back to flat windows when fewer than
/// two cue-bearing sections are found.
pub fn parse_document(raw: &str, filename: &str, options: &ParseOptions) -> DocumentTree {
    let boundaries = detect_sections(raw, options);
    let cued = boundaries.iter().filter(|b| b.cue.is_structural()).count();
    let mut tree = if cued >= 2 {
        build_hierarchy(&boundaries, raw)
    } else {
        build_flat(raw, options.fallback_chunk_chars)
    };
    tree.filename = filename.to_string();
    tree
}

/// Longest document prefix sent for summarization, in characters.
const SUMMARY_INPUT_CHARS: usize = 12_000;

/// Ask the model for a contract-level summary. One ledger record on
/// success; on failure the caller keeps its unchanged tree.
pub fn summarize_document(tree: &DocumentTree, chat: &Gateway) -> Result<DocumentTree, LlmError> {
    let excerpt: String = tree.source_text.chars().take(SUMMARY_INPUT_CHARS).collect();
    let messages = vec![Message::system(prompts::SUMMARY_SYSTEM), Message::user(prompts::summary_user(&tree.filename, &excerpt))];
    let summary = chat.chat(CallRole::Summarize, messages)?;
    let summary = summary.trim();
    if summary.is_empty() {
        return Err(LlmError::Upstream("model returned an empty summary".into()));
    }
    let mut out = tree.clone();
    out.summary = Some(summary.to_string());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::{CostLedger, ProviderProfile, ScriptedChat};

    #[test]
    fn structural_and_fallback_modes() {
        let opts = ParseOptions::default();
        let t = parse_document("1. Definitions\n1.1 Seller means X.\n2. Term\n2.1 One year.", "a.txt", &opts);
        assert_eq!(t.parse_mode, ParseMode::Structural);
        assert_eq!(t.filename, "a.txt");

        let para = "word ".repeat(500);
        let t = parse_document(&para, "b.txt", &opts);
        assert_eq!(t.parse_mode, ParseMode::FallbackFlat);
        let sizes: Vec<usize> = t.sections().map(|n| n.span.len()).collect();
        assert_eq!(sizes, vec![1000, 1000, 500]);

        let t = parse_document("", "c.txt", &opts);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.parse_mode, ParseMode::FallbackFlat);
    }

    #[test]
    fn ancestors_descendants_paths() {
        let t = parse_document("1. A\n1.1 B\n(a) C\n2. D", "x", &ParseOptions::default());
        let c = t.nodes.iter().find(|n| n.label.as_deref() == Some("(a)")).unwrap().id;
        assert_eq!(t.node_path(c), vec!["1.", "1.1", "(a)"]);
        assert_eq!(t.ancestors(c).len(), 2);
        assert_eq!(t.descendants(NodeId(1)), vec![NodeId(2), NodeId(3)]);
    }

    #[test]
    fn json_is_stable() {
        let t = parse_document("1. A\n2. B", "x.txt", &ParseOptions::default());
        let a = serde_json::to_string(&t.to_json()).unwrap();
        let b = serde_json::to_string(&parse_document("1. A\n2. B", "x.txt", &ParseOptions::default()).to_json()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(r#"{"filename":"x.txt","parse_mode":"structural","summary":null,"warnings":[],"nodes":[{"id":0,"kind":"root","label":null,"span":[0,9],"depth":0,"parent":null}"#), "{a}");
    }

    fn gateway(chat: ScriptedChat) -> (Gateway, Arc<CostLedger>) {
        let ledger = Arc::new(CostLedger::new());
        (Gateway::new(Arc::new(chat), ProviderProfile::offline("m"), ledger.clone()), ledger)
    }

    #[test]
    fn summary_pass_through_and_one_record() {
        let t = parse_document("1. A\n2. B", "x.txt", &ParseOptions::default());
        let (gw, ledger) = gateway(ScriptedChat::new(["NDA between A and B"]));
        let before = ledger.len();
        let s = summarize_document(&t, &gw).unwrap();
        assert_eq!(s.summary.as_deref(), Some("NDA between A and B"));
        assert_eq!(ledger.len() - before, 1);
        assert_eq!(ledger.records()[0].role, CallRole::Summarize);
    }

    #[test]
    fn summary_failure_leaves_tree_alone() {
        let t = parse_document("1. A\n2. B", "x.txt", &ParseOptions::default());
        let (gw, ledger) = gateway(ScriptedChat::from_results([Err(LlmError::Auth("no key".into()))]));
        let err = summarize_document(&t, &gw).unwrap_err();
        assert!(matches!(err, LlmError::Auth(_)));
        assert!(t.summary.is_none());
        assert!(ledger.is_empty());
    }
}
