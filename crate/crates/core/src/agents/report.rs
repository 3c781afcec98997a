//! Structured legal report: markdown parsing, validation and rendering.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::prompts::REPORT_HEADINGS;

pub const DISCLAIMER: &str = "> This report was produced by an automated assistive tool. It is not legal advice; have a qualified lawyer review it before relying on it.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub number: u32,
    pub quote: String,
    /// Clause, section or page descriptor.
    pub locator: String,
    pub filename: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub summary: String,
    pub legal_reasoning: String,
    pub preliminary_answer: String,
    pub gaps_and_questions: Vec<String>,
    pub sources: Vec<Source>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Title,
    Summary,
    Reasoning,
    Preliminary,
    Gaps,
    Sources,
}

const SECTIONS: [Section; 6] =
    [Section::Title, Section::Summary, Section::Reasoning, Section::Preliminary, Section::Gaps, Section::Sources];

/// Known section named by a markdown heading line, with any text that
/// follows the heading on the same line.
fn heading(line: &str) -> Option<(Section, &str)> {
    let t = line.trim_start();
    if !t.starts_with('#') {
        return None;
    }
    let body = t.trim_start_matches('#').trim().trim_start_matches("**");
    for (name, sec) in REPORT_HEADINGS.iter().zip(SECTIONS) {
        if body.len() >= name.len() && body.is_char_boundary(name.len()) && body[..name.len()].eq_ignore_ascii_case(name) {
            let rest = body[name.len()..].trim_start_matches("**").trim_start();
            let rest = rest.strip_prefix(':').unwrap_or(rest).trim_start_matches("**").trim();
            // "Summary of ..." is not the Summary heading
            if rest.is_empty() || body[name.len()..].trim_start_matches("**").starts_with(':') {
                return Some((sec, rest));
            }
        }
    }
    None
}

fn citation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\d+(?:\s*[,;]\s*\d+)*)\]").unwrap())
}

fn item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])\s+(.*)$").unwrap())
}

fn source_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*]\s*)?(?:\[(\d+)\]|(\d+)[.)])\s*(.*)$").unwrap())
}

fn filename_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\w.-]+\.(?:txt|md|markdown|pdf|docx?)\b").unwrap())
}

fn list_items(body: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    for line in body.lines().map(str::trim_end).filter(|l| !l.trim().is_empty()) {
        match item_re().captures(line) {
            Some(c) => items.push(c[1].trim().to_string()),
            None if line.starts_with([' ', '\t']) && !items.is_empty() => {
                let last = items.last_mut().unwrap();
                last.push(' ');
                last.push_str(line.trim());
            }
            None => items.push(line.trim().to_string()),
        }
    }
    items.retain(|i| !i.is_empty());
    items
}

fn split_quote(text: &str) -> (String, String) {
    for (open, close) in [('"', '"'), ('“', '”')] {
        if let Some(s) = text.find(open) {
            let after = &text[s + open.len_utf8()..];
            if let Some(e) = after.find(close) {
                let quote = after[..e].trim().to_string();
                let rest = format!("{} {}", &text[..s], &after[e + close.len_utf8()..]);
                let locator = rest.trim().trim_matches(|c: char| c == '-' || c == '—' || c == '–' || c == ',' || c == ':' || c.is_whitespace());
                return (quote, locator.trim_start_matches('(').trim_end_matches(')').trim().to_string());
            }
        }
    }
    (text.trim().to_string(), String::new())
}

fn parse_sources(body: &str) -> Vec<Source> {
    let mut out: Vec<(u32, String)> = Vec::new();
    for line in body.lines().filter(|l| !l.trim().is_empty()) {
        match source_re().captures(line) {
            Some(c) => {
                let n = c.get(1).or(c.get(2)).and_then(|m| m.as_str().parse().ok()).unwrap_or(0);
                out.push((n, c[3].trim().to_string()));
            }
            None => match out.last_mut() {
                Some((_, text)) => {
                    text.push(' ');
                    text.push_str(line.trim());
                }
                None => out.push((0, line.trim().to_string())),
            },
        }
    }
    out.into_iter()
        .map(|(number, text)| {
            let (quote, locator) = split_quote(&text);
            let filename = filename_re().find(&locator).map(|m| m.as_str().to_string());
            Source { number, quote, locator, filename }
        })
        .collect()
}

impl Report {
    /// Segment markdown on the six known headings. Text under unknown
    /// headings stays inside the enclosing known section.
    pub fn parse_markdown(md: &str) -> Result<Report, String> {
        let mut bodies: [Option<String>; 6] = Default::default();
        let mut current: Option<usize> = None;
        for line in md.lines() {
            if let Some((sec, rest)) = heading(line) {
                let i = SECTIONS.iter().position(|s| *s == sec).unwrap();
                let body = bodies[i].get_or_insert_with(String::new);
                if !rest.is_empty() {
                    body.push_str(rest);
                    body.push('\n');
                }
                current = Some(i);
            } else if let Some(i) = current {
                let body = bodies[i].get_or_insert_with(String::new);
                body.push_str(line);
                body.push('\n');
            }
        }
        for (i, b) in bodies.iter().enumerate() {
            if b.is_none() {
                return Err(format!("missing section \"{}\"", REPORT_HEADINGS[i]));
            }
        }
        let [title, summary, reasoning, preliminary, gaps, sources] = bodies.map(|b| b.unwrap_or_default());
        Ok(Report {
            title: title.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" "),
            summary: summary.trim().to_string(),
            legal_reasoning: reasoning.trim().to_string(),
            preliminary_answer: preliminary.trim().to_string(),
            gaps_and_questions: list_items(&gaps),
            sources: parse_sources(&sources),
        })
    }

    /// Schema check. `allow_empty_gaps` is set when the interrogator stopped
    /// because it was confident.
    pub fn validate(&self, allow_empty_gaps: bool) -> Result<(), String> {
        for (name, v) in [
            ("Title", &self.title),
            ("Summary", &self.summary),
            ("Legal Reasoning & Analysis", &self.legal_reasoning),
            ("Preliminary Answer & Direction for Further Research", &self.preliminary_answer),
        ] {
            if v.trim().is_empty() {
                return Err(format!("section \"{name}\" is empty"));
            }
        }
        if self.gaps_and_questions.is_empty() && !allow_empty_gaps {
            return Err("section \"Gaps & Next Questions\" is empty".into());
        }
        if self.sources.is_empty() {
            return Err("section \"Sources\" lists no sources".into());
        }
        for (i, s) in self.sources.iter().enumerate() {
            if s.number as usize != i + 1 {
                return Err(format!("source numbers must run 1, 2, ...; entry {} is numbered {}", i + 1, s.number));
            }
            if s.quote.trim().is_empty() {
                return Err(format!("source {} has no quoted text", s.number));
            }
        }
        for n in self.citations() {
            if n == 0 || n as usize > self.sources.len() {
                return Err(format!("citation [{n}] does not match any source"));
            }
        }
        Ok(())
    }

    /// Every `[n]` marker outside the Sources section, in order of appearance.
    pub fn citations(&self) -> Vec<u32> {
        let texts = [&self.title, &self.summary, &self.legal_reasoning, &self.preliminary_answer]
            .into_iter()
            .cloned()
            .chain(self.gaps_and_questions.iter().cloned());
        let mut out = Vec::new();
        for t in texts {
            for c in citation_re().captures_iter(&t) {
                out.extend(c[1].split([',', ';']).filter_map(|n| n.trim().parse::<u32>().ok()));
            }
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut md = format!(
            "## Title: {}\n\n### Summary:\n{}\n\n### Legal Reasoning & Analysis:\n{}\n\n### Preliminary Answer & Direction for Further Research:\n{}\n\n### Gaps & Next Questions:\n",
            self.title, self.summary, self.legal_reasoning, self.preliminary_answer
        );
        for g in &self.gaps_and_questions {
            md.push_str(&format!("- {g}\n"));
        }
        md.push_str("\n### Sources:\n");
        for s in &self.sources {
            if s.locator.is_empty() {
                md.push_str(&format!("{}. \"{}\"\n", s.number, s.quote));
            } else {
                md.push_str(&format!("{}. \"{}\" - {}\n", s.number, s.quote, s.locator));
            }
        }
        md
    }

    /// Markdown for people: the report preceded by the disclaimer.
    pub fn render(&self) -> String {
        format!("{DISCLAIMER}\n\n{}", self.to_markdown())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
    Unknown,
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(ENTAILMENT|CONTRADICTION|NEUTRAL)\b").unwrap())
}

fn emphasized_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:\*\*|__|\*|_)(ENTAILMENT|CONTRADICTION|NEUTRAL)(?:\*\*|__|\*|_)").unwrap())
}

fn label_of(s: &str) -> NliLabel {
    match s {
        "ENTAILMENT" => NliLabel::Entailment,
        "CONTRADICTION" => NliLabel::Contradiction,
        "NEUTRAL" => NliLabel::Neutral,
        _ => NliLabel::Unknown,
    }
}

fn label_in(text: &str) -> Option<NliLabel> {
    if let Some(c) = emphasized_re().captures_iter(text).last() {
        return Some(label_of(&c[1]));
    }
    label_re().captures_iter(text).last().map(|c| label_of(&c[1]))
}

/// Label from the preliminary answer, falling back to the reasoning. An
/// emphasized label wins over plain mentions; among equals the last wins.
pub fn extract_nli_label(report: &Report) -> NliLabel {
    label_in(&report.preliminary_answer).or_else(|| label_in(&report.legal_reasoning)).unwrap_or(NliLabel::Unknown)
}
