//! Prompt templates for every model call.
//!
//! Variable content is wrapped in XML-style tags (`<question>`,
//! `<report>`, ...). The mock pipeline client keys off these tags, so
//! renaming one is a breaking change for recorded cassettes.

/// Sentence the interrogator emits when it has enough to answer.
pub const STOP_PHRASE: &str = "Thank you, I am now in a position to answer the question with confidence.";

/// Distinctive clause matched case-insensitively to detect the stop phrase.
pub const STOP_CLAUSE: &str = "i am now in a position to answer";

pub const REPORT_HEADINGS: [&str; 6] = [
    "Title",
    "Summary",
    "Legal Reasoning & Analysis",
    "Preliminary Answer & Direction for Further Research",
    "Gaps & Next Questions",
    "Sources",
];

/// Text between the first `<tag>` and the following `</tag>`.
pub fn extract_tag<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let s = text.find(&open)? + open.len();
    let e = text[s..].find(&close)? + s;
    Some(&text[s..e])
}

fn or_none(s: &str) -> &str {
    if s.trim().is_empty() {
        "(none)"
    } else {
        s
    }
}

pub const SUMMARY_SYSTEM: &str = "You summarize contracts for a legal research index. Reply with two or three sentences naming the parties, the type of agreement and its main subject matter. Reply with the summary only.";

pub fn summary_user(filename: &str, excerpt: &str) -> String {
    format!("File: {filename}\n<document>\n{excerpt}\n</document>")
}

pub const PARSE_SYSTEM: &str = "You segment legal documents into sections. Each input line is prefixed with its number as `L<n>:`. Identify every line that starts a section (titles, clauses, paragraphs, enumerated list items) and its nesting depth, where top-level sections have depth 1. Reply with a JSON array only, for example [{\"line\": 1, \"depth\": 1, \"kind\": \"title\", \"label\": \"1.\"}]. Allowed kinds: title, clause, paragraph, list_item.";

pub fn parse_user(numbered_lines: &str) -> String {
    format!("<document>\n{numbered_lines}</document>")
}

pub const ARCHIVIST_SYSTEM: &str = "You are the intake assistant of a contract analysis service. Talk with the user to understand the legal question they want answered about their contract, any background context, and any instructions on how the analysis should be carried out. Ask one short clarifying question at a time when something essential is ambiguous or missing.";

pub const ARCHIVIST_FINALIZE_SYSTEM: &str = "You distill an intake conversation into a research brief. Reply with a JSON object with exactly three string fields: \"query\" (the legal question, self-contained), \"context\" (relevant background, may be empty) and \"instructions\" (how the user wants the analysis done, may be empty). Reply with the JSON object only.";

pub fn archivist_finalize_user(transcript: &str) -> String {
    format!("<transcript>\n{transcript}</transcript>")
}

pub fn interrogation_system(query: &str, context: &str, instructions: &str, remaining: usize) -> String {
    format!(
        "You are a legal interrogator questioning a legal researcher who has access to the contract. \
Your aim is to collect well-supported evidence and reasoning that settles the following legal question.\n\n\
<question>\n{query}\n</question>\n\n\
Background supplied by the user:\n<context>\n{context}\n</context>\n\n\
Instructions supplied by the user:\n<instructions>\n{instructions}\n</instructions>\n\n\
You will receive the current draft report (its preliminary reasoning, acknowledged gaps, open uncertainties and follow-up questions) \
and the list of questions asked so far. Study both before asking.\n\n\
You have {remaining} questions remaining, so each one must be as informative as possible. \
Target unresolved gaps, ask for the exact contract language that supports or defeats the current direction, \
and never repeat a question that has already been asked or answered.\n\n\
Reply with exactly one question. When you are satisfied that everything needed has been gathered, reply instead with: \"{STOP_PHRASE}\"",
        context = or_none(context),
        instructions = or_none(instructions),
    )
}

pub fn interrogation_user(report: &str, questions: &[String]) -> String {
    let listed = if questions.is_empty() {
        "(none)".to_string()
    } else {
        questions.iter().enumerate().map(|(i, q)| format!("{}. {}", i + 1, q.replace('\n', " "))).collect::<Vec<_>>().join("\n")
    };
    format!(
        "Current draft report:\n<report>\n{}\n</report>\n\nQuestions asked so far:\n<questions>\n{listed}\n</questions>\n\n\
Ask the next question. Move the analysis forward, address open gaps and ask for specific supporting language.",
        or_none(report)
    )
}

pub const DUPLICATE_QUESTION_NUDGE: &str = "That question is empty or was already asked. Ask a different question that has not been asked yet.";

pub fn report_system() -> String {
    "You are a legal technical writer maintaining a structured report that answers a legal question about a contract. \
You receive the question, the existing draft (possibly empty) and the latest exchange between an interrogator and a researcher. \
Integrate the new findings by rewriting the whole report as a single coherent, current version; do not append at the end \
and do not mention earlier drafts or the conversation. The report develops reasoning and open gaps rather than a final verdict, \
and may revise earlier directions.\n\n\
Use exactly these markdown headings, in this order:\n\
## Title: <title>\n\
### Summary:\n\
### Legal Reasoning & Analysis:\n\
### Preliminary Answer & Direction for Further Research:\n\
### Gaps & Next Questions:\n\
### Sources:\n\n\
Cite evidence inline as [1], [2], ... Under Sources, list each cited item once as a numbered line starting at 1, \
quoting the supporting contract text in double quotes and stating where to find it (clause number, section name, page). \
List follow-up questions under Gaps & Next Questions as bullet points. Write formally and concisely, around 500 words at most.".to_string()
}

pub fn report_user(query: &str, context: &str, conversation: &str, existing: &str) -> String {
    format!(
        "Update the report below with the new exchange, keeping only what matters for the answer.\n\n\
Legal question:\n<question>\n{query}\n</question>\n\n\
Background:\n<context>\n{}\n</context>\n\n\
New exchange:\n<conversation>\n{conversation}\n</conversation>\n\n\
Existing report:\n<legal_report>\n{}\n</legal_report>\n\n\
Write the complete updated report now.",
        or_none(context),
        or_none(existing)
    )
}

pub fn report_repair_user(problem: &str, draft: &str) -> String {
    format!(
        "The report below does not follow the required structure: {problem}.\n\
Rewrite it with all six headings present, sources numbered consecutively from 1, and every [n] citation matching a source.\n\n\
<legal_report>\n{draft}\n</legal_report>"
    )
}

pub const QUERY_EXTRACT_SYSTEM: &str = "You turn a research question about a contract into a concise search query for a hybrid keyword and semantic search over the contract's clauses. Keep the legally significant terms. Reply with the query only.";

pub fn query_extract_user(question: &str) -> String {
    format!("<question>\n{question}\n</question>")
}

pub const TOOL_SELECT_SYSTEM: &str = "You plan retrieval for a research question about a contract. Choose the tools that best serve the question from the list provided and write a concise search query. Reply with a JSON object {\"tools\": [tool names], \"query\": \"...\"} only.";

pub fn tool_select_user(question: &str, tools: &str) -> String {
    format!("<tools>\n{tools}\n</tools>\n\n<question>\n{question}\n</question>")
}

pub const NL_RESPONSE_SYSTEM: &str = "You are a legal researcher. Answer the question using only the numbered contract excerpts provided, quoting the decisive language and citing excerpts by their number. If the excerpts do not answer the question, say so.";

pub fn nl_response_user(question: &str, excerpts: &str, examples: &str) -> String {
    let mut s = format!("<question>\n{question}\n</question>\n\n<excerpts>\n{}\n</excerpts>", or_none(excerpts));
    if !examples.is_empty() {
        s.push_str(&format!("\n\nLabeled examples from other contracts:\n<examples>\n{examples}\n</examples>"));
    }
    s
}

pub const FILTER_SYSTEM: &str = "You extract evidence. Given a question and a passage, copy the sentence or sentences of the passage that are most relevant to the question, verbatim and without changes. Put each extracted excerpt on its own line. If nothing is relevant reply with NONE.";

pub fn filter_user(question: &str, passage: &str) -> String {
    format!("<question>\n{question}\n</question>\n\n<passage>\n{passage}\n</passage>")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_extraction() {
        assert_eq!(extract_tag("a <q>inner</q> b", "q"), Some("inner"));
        assert_eq!(extract_tag("a <q>unterminated", "q"), None);
    }

    #[test]
    fn interrogation_prompt_carries_inputs() {
        let s = interrogation_system("Is X allowed?", "", "be brief", 3);
        assert_eq!(extract_tag(&s, "question").unwrap().trim(), "Is X allowed?");
        assert_eq!(extract_tag(&s, "context").unwrap().trim(), "(none)");
        assert!(s.contains("3 questions remaining"));
        assert!(s.contains(STOP_PHRASE));
        let u = interrogation_user("", &["a".into(), "b".into()]);
        assert_eq!(extract_tag(&u, "questions").unwrap().trim(), "1. a\n2. b");
    }

    #[test]
    fn report_prompt_lists_every_heading() {
        let s = report_system();
        for h in REPORT_HEADINGS {
            assert!(s.contains(h), "{h}");
        }
    }
}
