//! Hierarchy construction from detected boundaries.

use super::detect::{Cue, NodeKind, SectionBoundary};
use super::{DocumentTree, NodeId, ParseMode, SectionNode};
use crate::span::{CharIndex, CharSpan};

#[derive(Debug, Clone)]
enum Level {
    Heading(u8),
    Decimal(Vec<u32>),
    List { rank: u8, style: u8, indent: usize },
    Paragraph { indent: usize },
}

impl Level {
    fn of(b: &SectionBoundary) -> Self {
        match &b.cue {
            Cue::Heading { level } => Level::Heading(*level),
            Cue::Decimal { components } => Level::Decimal(components.clone()),
            Cue::Alpha { .. } => Level::List { rank: 1, style: 1, indent: b.indent },
            Cue::Roman { .. } => Level::List { rank: 2, style: 2, indent: b.indent },
            Cue::Bullet => Level::List { rank: 3, style: 3, indent: b.indent },
            Cue::Paragraph => Level::Paragraph { indent: b.indent },
        }
    }
}

fn decimal_label(components: &[u32]) -> String {
    components.iter().map(u32::to_string).collect::<Vec<_>>().join(".")
}

/// Arrange boundaries into a tree. Each section becomes the child of the
/// nearest preceding open section of strictly shallower structural depth:
/// headings by level, numbered clauses by component count, list items by
/// indentation and marker style, paragraphs by indentation. Numbering that
/// does not line up with its parent is attached anyway and reported in
/// `warnings`.
pub fn build_hierarchy(boundaries: &[SectionBoundary], text: &str) -> DocumentTree {
    let index = CharIndex::new(text);
    let mut tree = DocumentTree::empty(text, ParseMode::Structural);
    // open sections, innermost last
    let mut stack: Vec<(NodeId, Level)> = Vec::new();
    // last decimal child seen under each parent, for monotonicity checks
    let mut last_decimal_child: Vec<Option<Vec<u32>>> = vec![None];

    for b in boundaries {
        let level = Level::of(b);
        match &level {
            Level::Heading(l) => {
                while let Some((_, top)) = stack.last() {
                    match top {
                        Level::Heading(t) if t < l => break,
                        _ => {
                            stack.pop();
                        }
                    }
                }
            }
            Level::Decimal(comps) => {
                while let Some((_, top)) = stack.last() {
                    match top {
                        Level::Heading(_) => break,
                        Level::Decimal(t) if t.len() < comps.len() => break,
                        _ => {
                            stack.pop();
                        }
                    }
                }
            }
            Level::List { rank, style, indent } => {
                while let Some((_, top)) = stack.last() {
                    match top {
                        Level::Paragraph { .. } => {
                            stack.pop();
                        }
                        Level::List { rank: tr, style: ts, indent: ti } => {
                            let pop = ti > indent || (ti == indent && (ts == style || tr > rank));
                            if !pop {
                                break;
                            }
                            stack.pop();
                        }
                        _ => break,
                    }
                }
            }
            Level::Paragraph { indent } => {
                while let Some((_, top)) = stack.last() {
                    let pop = match top {
                        Level::Paragraph { indent: ti } => ti >= indent,
                        Level::List { indent: ti, .. } => ti >= indent,
                        _ => false,
                    };
                    if !pop {
                        break;
                    }
                    stack.pop();
                }
            }
        }

        let parent = stack.last().map(|(id, _)| *id).unwrap_or(tree.root);

        if let Level::Decimal(comps) = &level {
            let parent_comps = match stack.last() {
                Some((_, Level::Decimal(p))) => Some(p.clone()),
                _ => None,
            };
            let shown = b.label.clone().unwrap_or_else(|| decimal_label(comps));
            if comps.len() > 1 {
                let expected_prefix = &comps[..comps.len() - 1];
                if parent_comps.as_deref() != Some(expected_prefix) {
                    tree.warnings.push(format!(
                        "malformed numbering: {shown} placed under {}",
                        parent_comps.map(|p| decimal_label(&p)).unwrap_or_else(|| "the enclosing section".into())
                    ));
                }
            }
            let slot = &mut last_decimal_child[parent.0];
            if let Some(prev) = slot.as_ref() {
                if prev.len() == comps.len() && prev.last() >= comps.last() {
                    tree.warnings.push(format!("malformed numbering: {shown} does not follow {}", decimal_label(prev)));
                }
            }
            *slot = Some(comps.clone());
        }

        let node_text = index.slice(text, b.span).unwrap_or_default().to_string();
        let id = tree.push_child(parent, b.kind, b.label.clone(), node_text, b.span);
        last_decimal_child.push(None);
        stack.push((id, level));
    }
    tree
}

/// Flat tree used when structural parsing finds fewer than two cued
/// sections: consecutive non-overlapping windows of `window` characters,
/// each a depth-1 paragraph. Windows that are pure whitespace are skipped.
pub fn build_flat(text: &str, window: usize) -> DocumentTree {
    let window = window.max(1);
    let index = CharIndex::new(text);
    let mut tree = DocumentTree::empty(text, ParseMode::FallbackFlat);
    let total = index.char_len();
    let mut start = 0;
    while start < total {
        let end = (start + window).min(total);
        let span = CharSpan::new(start, end);
        let chunk = index.slice(text, span).unwrap_or_default();
        if !chunk.trim().is_empty() {
            tree.push_child(tree.root, NodeKind::Paragraph, None, chunk.to_string(), span);
        }
        start = end;
    }
    tree
}

/// Tree from explicit (boundary, depth) pairs, as produced by model-based
/// parsing. A depth greater than one past the previous section's depth is
/// clamped.
pub(crate) fn build_from_depths(sections: &[(SectionBoundary, usize)], text: &str) -> DocumentTree {
    let index = CharIndex::new(text);
    let mut tree = DocumentTree::empty(text, ParseMode::Structural);
    let mut stack: Vec<(NodeId, usize)> = Vec::new();
    for (b, depth) in sections {
        let max_depth = stack.last().map(|(_, d)| d + 1).unwrap_or(1);
        let depth = (*depth).clamp(1, max_depth);
        while stack.last().is_some_and(|(_, d)| *d >= depth) {
            stack.pop();
        }
        let parent = stack.last().map(|(id, _)| *id).unwrap_or(tree.root);
        let node_text = index.slice(text, b.span).unwrap_or_default().to_string();
        let id = tree.push_child(parent, b.kind, b.label.clone(), node_text, b.span);
        stack.push((id, depth));
    }
    tree
}

impl DocumentTree {
    pub(crate) fn empty(text: &str, mode: ParseMode) -> Self {
        let len = text.chars().count();
        let root = SectionNode {
            id: NodeId(0),
            kind: NodeKind::Root,
            label: None,
            text: String::new(),
            span: CharSpan::new(0, len),
            depth: 0,
            parent: None,
            children: Vec::new(),
        };
        DocumentTree {
            root: NodeId(0),
            nodes: vec![root],
            filename: String::new(),
            source_text: text.to_string(),
            summary: None,
            parse_mode: mode,
            warnings: Vec::new(),
        }
    }

    pub(crate) fn push_child(
        &mut self,
        parent: NodeId,
        kind: NodeKind,
        label: Option<String>,
        text: String,
        span: CharSpan,
    ) -> NodeId {
        let id = NodeId(self.nodes.len());
        let depth = self.nodes[parent.0].depth + 1;
        self.nodes.push(SectionNode { id, kind, label, text, span, depth, parent: Some(parent), children: Vec::new() });
        self.nodes[parent.0].children.push(id);
        id
    }
}
