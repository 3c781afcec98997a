//! Section detection: split raw text into boundary blocks using numbering,
//! heading and indentation cues.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::span::CharSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    Title,
    Clause,
    Paragraph,
    ListItem,
}

/// The structural cue that opened a block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "cue")]
pub enum Cue {
    /// Markdown `#` heading, ALL-CAPS line or upper-case roman heading.
    Heading { level: u8 },
    /// Dotted decimal numbering; `components` are the parsed numbers.
    Decimal { components: Vec<u32> },
    Alpha { letter: char },
    Roman { value: u32 },
    Bullet,
    Paragraph,
}

impl Cue {
    pub fn is_structural(&self) -> bool {
        !matches!(self, Cue::Paragraph)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionBoundary {
    pub span: CharSpan,
    pub kind: NodeKind,
    pub label: Option<String>,
    pub cue: Cue,
    /// Leading whitespace columns of the block's first line (tab = 4).
    pub indent: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumStyle {
    /// `1.`, `1.1`, `2.3.4.`
    Decimal,
    /// `Section 4`, `Article 2.1`, `ARTICLE IV`
    SectionWord,
    /// `(a)`, `a)`, `(iv)`, `ii)`
    Parenthesized,
    /// `a.`, `iii.`
    LowerDotted,
    /// `I.`, `IV.`
    UpperRoman,
    /// `-`, `*`, `•`
    Bullet,
}

/// One entry of the enumerator table. Capture group 1 is the label as
/// written; group 2, when present, is the bare number or letters.
#[derive(Debug, Clone)]
pub struct NumberingRule {
    pub style: EnumStyle,
    pub pattern: Regex,
}

impl NumberingRule {
    pub fn new(style: EnumStyle, pattern: &str) -> Result<Self, regex::Error> {
        Ok(Self { style, pattern: Regex::new(pattern)? })
    }
}

pub fn default_numbering_rules() -> Vec<NumberingRule> {
    let table = [
        (EnumStyle::SectionWord, r"^((?i:section|article|clause)\s+(\d{1,3}(?:\.\d{1,3})*|[IVXLC]{1,6})\.?)(?:\s|$)"),
        (EnumStyle::Decimal, r"^((\d{1,3}(?:\.\d{1,3})+)\.?|(\d{1,3})\.)(?:\s|$)"),
        (EnumStyle::Parenthesized, r"^(\(([a-zA-Z]{1,4})\)|([a-zA-Z]{1,4})\))(?:\s|$)"),
        (EnumStyle::LowerDotted, r"^(([a-z]|[ivx]{2,4})\.)\s"),
        (EnumStyle::UpperRoman, r"^(([IVX]{1,4})\.)\s"),
        (EnumStyle::Bullet, r"^([-*•])\s+"),
    ];
    table.iter().map(|(s, p)| NumberingRule::new(*s, p).expect("default numbering regex")).collect()
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub numbering: bool,
    pub headings: bool,
    pub indentation: bool,
    /// Window size of the flat fallback, in characters.
    pub fallback_chunk_chars: usize,
    /// Longest line still considered an ALL-CAPS heading.
    pub max_heading_chars: usize,
    /// Longest numbered single line still treated as a title rather than a clause.
    pub max_title_chars: usize,
    pub rules: Vec<NumberingRule>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            numbering: true,
            headings: true,
            indentation: true,
            fallback_chunk_chars: 1000,
            max_heading_chars: 80,
            max_title_chars: 60,
            rules: default_numbering_rules(),
        }
    }
}

fn roman_value(s: &str) -> Option<u32> {
    let mut total = 0u32;
    let mut prev = 0u32;
    for c in s.chars().rev() {
        let v = match c.to_ascii_lowercase() {
            'i' => 1,
            'v' => 5,
            'x' => 10,
            'l' => 50,
            'c' => 100,
            'd' => 500,
            'm' => 1000,
            _ => return None,
        };
        if v < prev {
            total = total.checked_sub(v)?;
        } else {
            total += v;
            prev = v;
        }
    }
    (total > 0).then_some(total)
}

fn is_roman(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| "ivxlcdmIVXLCDM".contains(c)) && roman_value(s).is_some()
}

fn letter_before(c: char) -> Option<char> {
    let c = c.to_ascii_lowercase();
    (c > 'a' && c <= 'z').then(|| (c as u8 - 1) as char)
}

/// Resolve an enumerator like `i`, `c` or `iv` to alpha or roman, using the
/// last alpha item seen: `(i)` right after `(h)` is alpha, otherwise roman.
/// A single letter continuing a roman run (`(v)` after `(iv)`) stays roman.
fn letters_cue(letters: &str, last_alpha: Option<char>, last_roman: Option<u32>) -> Option<Cue> {
    let single = letters.chars().count() == 1;
    if single {
        let c = letters.chars().next()?;
        if let (Some(prev), Some(v)) = (last_roman, roman_value(letters)) {
            if v == prev + 1 {
                return Some(Cue::Roman { value: v });
            }
        }
        let follows_alpha = last_alpha.is_some() && letter_before(c) == last_alpha.map(|a| a.to_ascii_lowercase());
        if c.eq_ignore_ascii_case(&'i') && !follows_alpha {
            return Some(Cue::Roman { value: 1 });
        }
        return c.is_ascii_alphabetic().then_some(Cue::Alpha { letter: c });
    }
    if is_roman(letters) {
        return roman_value(letters).map(|value| Cue::Roman { value });
    }
    None
}

struct LineCue {
    cue: Cue,
    label: Option<String>,
    /// Text of the line after the enumerator.
    rest_len: usize,
    rest_ends_like_sentence: bool,
}

fn classify_line(line: &str, opts: &ParseOptions, last_alpha: Option<char>, last_roman: Option<u32>) -> Option<LineCue> {
    let mut body = line;
    let mut md_level = None;
    if opts.headings {
        let hashes = line.chars().take_while(|c| *c == '#').count();
        if (1..=6).contains(&hashes) && line[hashes..].starts_with([' ', '\t']) {
            md_level = Some(hashes as u8);
            body = line[hashes..].trim_start();
        }
    }

    if opts.numbering {
        for rule in &opts.rules {
            let Some(caps) = rule.pattern.captures(body) else { continue };
            let whole = caps.get(0).unwrap();
            let label = caps.get(1).map(|m| m.as_str().trim().to_string());
            let rest = body[whole.end()..].trim();
            let number = caps.get(2).or_else(|| caps.get(3)).map(|m| m.as_str()).unwrap_or("");
            let cue = match rule.style {
                EnumStyle::Decimal => {
                    let components: Option<Vec<u32>> = number.split('.').map(|p| p.parse().ok()).collect();
                    Cue::Decimal { components: components? }
                }
                EnumStyle::SectionWord => {
                    if number.chars().all(|c| c.is_ascii_digit() || c == '.') {
                        let components: Option<Vec<u32>> = number.split('.').map(|p| p.parse().ok()).collect();
                        Cue::Decimal { components: components? }
                    } else {
                        Cue::Heading { level: 1 }
                    }
                }
                EnumStyle::Parenthesized | EnumStyle::LowerDotted => match letters_cue(number, last_alpha, last_roman) {
                    Some(c) => c,
                    None => continue,
                },
                EnumStyle::UpperRoman => {
                    if !is_roman(number) {
                        continue;
                    }
                    Cue::Heading { level: 1 }
                }
                EnumStyle::Bullet => Cue::Bullet,
            };
            let label = if matches!(cue, Cue::Bullet) { None } else { label };
            return Some(LineCue {
                cue,
                label,
                rest_len: rest.chars().count(),
                rest_ends_like_sentence: rest.ends_with(['.', ';', ',', ':']),
            });
        }
    }

    if let Some(level) = md_level {
        let text = body.trim().to_string();
        return Some(LineCue {
            cue: Cue::Heading { level },
            label: (!text.is_empty()).then_some(text),
            rest_len: 0,
            rest_ends_like_sentence: false,
        });
    }

    if opts.headings && is_caps_heading(line, opts.max_heading_chars) {
        return Some(LineCue {
            cue: Cue::Heading { level: 1 },
            label: Some(line.trim().to_string()),
            rest_len: 0,
            rest_ends_like_sentence: false,
        });
    }
    None
}

fn is_caps_heading(line: &str, max_chars: usize) -> bool {
    let t = line.trim();
    if t.chars().count() > max_chars {
        return false;
    }
    let letters = t.chars().filter(|c| c.is_alphabetic()).count();
    letters >= 3 && !t.chars().any(|c| c.is_lowercase()) && !t.ends_with([',', ';'])
}

fn indent_width(line: &str) -> usize {
    line.chars()
        .take_while(|c| c.is_whitespace())
        .map(|c| if c == '\t' { 4 } else { 1 })
        .sum()
}

struct OpenBlock {
    start: usize,
    end: usize,
    cue: Cue,
    label: Option<String>,
    indent: usize,
    lines: usize,
    title_like: bool,
    single_line_only: bool,
}

impl OpenBlock {
    fn finish(self) -> SectionBoundary {
        let kind = match &self.cue {
            Cue::Heading { .. } => NodeKind::Title,
            Cue::Decimal { .. } if self.lines == 1 && self.title_like => NodeKind::Title,
            Cue::Decimal { .. } => NodeKind::Clause,
            Cue::Alpha { .. } | Cue::Roman { .. } | Cue::Bullet => NodeKind::ListItem,
            Cue::Paragraph => NodeKind::Paragraph,
        };
        SectionBoundary { span: CharSpan::new(self.start, self.end), kind, label: self.label, cue: self.cue, indent: self.indent }
    }
}

/// Split `text` into ascending, non-overlapping blocks that together cover
/// every non-whitespace character. A block opens at a line carrying a cue,
/// at the first non-blank line after a blank line, and after a heading line;
/// other lines continue the open block.
pub fn detect_sections(text: &str, options: &ParseOptions) -> Vec<SectionBoundary> {
    let mut out = Vec::new();
    let mut open: Option<OpenBlock> = None;
    let mut after_blank = true;
    let mut last_alpha: Option<char> = None;
    let mut last_roman: Option<u32> = None;
    let mut char_pos = 0usize;

    for raw_line in text.split_inclusive('\n') {
        let line_chars = raw_line.chars().count();
        let line = raw_line.trim_end_matches(['\n', '\r']);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            after_blank = true;
            char_pos += line_chars;
            continue;
        }
        let lead_chars = line.chars().take_while(|c| c.is_whitespace()).count();
        let content_start = char_pos + lead_chars;
        let content_end = content_start + trimmed.chars().count();
        let indent = if options.indentation { indent_width(line) } else { 0 };

        let cue = classify_line(trimmed, options, last_alpha, last_roman);
        let continues = cue.is_none() && !after_blank && open.as_ref().is_some_and(|b| !b.single_line_only);

        if continues {
            let b = open.as_mut().unwrap();
            b.end = content_end;
            b.lines += 1;
        } else {
            if let Some(b) = open.take() {
                out.push(b.finish());
            }
            let (cue, label, title_like) = match cue {
                Some(lc) => {
                    let title_like = lc.rest_len > 0 && lc.rest_len <= options.max_title_chars && !lc.rest_ends_like_sentence;
                    (lc.cue, lc.label, title_like)
                }
                None => (Cue::Paragraph, None, false),
            };
            match &cue {
                Cue::Alpha { letter } => last_alpha = Some(*letter),
                Cue::Roman { value } => last_roman = Some(*value),
                Cue::Decimal { .. } | Cue::Heading { .. } => {
                    last_alpha = None;
                    last_roman = None;
                }
                _ => {}
            }
            let single_line_only = matches!(cue, Cue::Heading { .. });
            open = Some(OpenBlock {
                start: content_start,
                end: content_end,
                cue,
                label,
                indent,
                lines: 1,
                title_like,
                single_line_only,
            });
        }
        after_blank = false;
        char_pos += line_chars;
    }
    if let Some(b) = open.take() {
        out.push(b.finish());
    }
    out
}
