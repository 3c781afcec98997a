//! Character-addressed spans and the text helpers that go with them.
//!
//! Every offset in this crate counts Unicode scalar values, not bytes, so
//! spans line up with ground-truth annotations produced by tools that index
//! strings by character.

use serde::{Deserialize, Serialize};

/// Half-open character interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", from = "[usize; 2]")]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "span start {start} > end {end}");
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Positive-length intersection test.
    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl From<CharSpan> for [usize; 2] {
    fn from(s: CharSpan) -> Self {
        [s.start, s.end]
    }
}

impl From<[usize; 2]> for CharSpan {
    fn from(v: [usize; 2]) -> Self {
        CharSpan { start: v[0], end: v[1] }
    }
}

/// Maps character offsets to byte offsets for one source string.
#[derive(Debug, Clone)]
pub struct CharIndex {
    // byte offset of each char, plus a trailing entry for the string length
    offsets: Vec<usize>,
}

impl CharIndex {
    pub fn new(text: &str) -> Self {
        let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        offsets.push(text.len());
        Self { offsets }
    }

    pub fn char_len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn byte_offset(&self, char_pos: usize) -> Option<usize> {
        self.offsets.get(char_pos).copied()
    }

    /// Character offset of a byte position that falls on a char boundary.
    pub fn char_offset(&self, byte_pos: usize) -> Option<usize> {
        self.offsets.binary_search(&byte_pos).ok()
    }

    pub fn slice<'a>(&self, text: &'a str, span: CharSpan) -> Option<&'a str> {
        if span.start > span.end {
            return None;
        }
        let s = self.byte_offset(span.start)?;
        let e = self.byte_offset(span.end)?;
        text.get(s..e)
    }
}

/// Substring addressed by a character span, or `None` when out of bounds.
pub fn slice_chars(text: &str, span: CharSpan) -> Option<&str> {
    CharIndex::new(text).slice(text, span)
}

/// Collapse every whitespace run to a single space and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace-normalized, lowercased form used for duplicate detection.
pub fn dedup_key(text: &str) -> String {
    normalize_whitespace(text).to_lowercase()
}

/// Sort and merge spans into disjoint ascending intervals. Empty spans vanish.
pub fn merge_spans(spans: &[CharSpan]) -> Vec<CharSpan> {
    let mut sorted: Vec<CharSpan> = spans.iter().copied().filter(|s| !s.is_empty()).collect();
    sorted.sort();
    let mut out: Vec<CharSpan> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if s.start <= last.end => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Total length of the intersection of two merged (disjoint, ascending) span lists.
pub fn intersection_len(a: &[CharSpan], b: &[CharSpan]) -> usize {
    let (mut i, mut j, mut total) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].start.max(b[j].start);
        let hi = a[i].end.min(b[j].end);
        if lo < hi {
            total += hi - lo;
        }
        if a[i].end < b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}
