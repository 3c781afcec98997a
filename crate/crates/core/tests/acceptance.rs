//! Acceptance suite: one PASS/FAIL line per criterion. Exit status is
//! non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use covenant::agents::prompts::{REPORT_HEADINGS, STOP_PHRASE};
use covenant::agents::{
    extract_nli_label, run_interrogation, AgentError, ArchivistSession, InterrogationFailure, InterrogationState,
    InterrogatorOptions, NliLabel, Report, ResearchOptions, ResearchResources, UserBrief, DEFAULT_D_MAX,
};
use covenant::chunker::{Chunk, ChunkKind};
use covenant::doctree::{parse_document, ParseMode, ParseOptions};
use covenant::eval::{char_pr_at_k, perfect_oracle, run_benchmark, span_pr_at_k, PipelineRetriever};
use covenant::index::{ChunkIndex, Hit};
use covenant::interface::EngineConfig;
use covenant::llm::{
    expected_call_count, ChatClient, ChatRequest, ClientSet, Completion, Embedder, FnChat, HashEmbedder, LexicalReranker,
    MockPipelineChat, RecordingChat, ReplayChat,
};
use covenant::pipeline::{ingest, IngestOptions};
use covenant::retrieval::{retrieve, rrf_fuse, RetrievalConfig, DEFAULT_RRF_K};
use covenant::span::{normalize_whitespace, CharSpan};
use covenant::tokenize::tokenize;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn clients(chat: impl ChatClient + 'static) -> ClientSet {
    ClientSet::uniform(Arc::new(chat), Arc::new(HashEmbedder::default()), Arc::new(LexicalReranker))
}

const NDA: &str = "1. Confidentiality\n1.1 The Recipient may disclose Confidential Information to employees who need to know.\n1.2 The Recipient shall protect Confidential Information with reasonable care.\n2. Term\n2.1 This Agreement lasts two years from the Effective Date.\n3. Return\n3.1 On request the Recipient shall return all copies.";

// ---------------------------------------------------------------- cost model

fn cost_identity() -> Result<String, String> {
    let mut runs = 0;
    for n_turns in 0..=3u64 {
        for d_int in 1..=5u64 {
            for llm_parsing in [false, true] {
                for nl_response in [false, true] {
                    let c = clients(MockPipelineChat::never_stopping());
                    let opts = IngestOptions { llm_parsing, ..Default::default() };
                    let doc = ingest(NDA, "nda.txt", &opts, &c).map_err(|e| e.to_string())?;
                    let mut session = ArchivistSession::new();
                    let query = "May the recipient share confidential information with employees?";
                    if n_turns == 0 {
                        session.push_user(query);
                    }
                    for t in 0..n_turns {
                        let msg = if t == 0 { query.to_string() } else { format!("Additional context number {t}.") };
                        session.converse(&msg, &c.archivist).map_err(|e| e.to_string())?;
                    }
                    let brief = session.finalize(&c.archivist).map_err(|e| e.to_string())?;
                    let options = InterrogatorOptions {
                        research: ResearchOptions { nl_response, ..Default::default() },
                        ..Default::default()
                    };
                    let (_, state) = run_interrogation(brief, ResearchResources::document(&doc.index), d_int as usize, &c, &options, &mut |_| {})
                        .map_err(|e| e.to_string())?;
                    let expected = expected_call_count(n_turns, d_int, llm_parsing, nl_response);
                    let got = c.ledger.len() as u64;
                    let tuple = format!("(n_turns={n_turns}, d_int={d_int}, llm_parsing={llm_parsing}, nl_response={nl_response})");
                    ensure(state.turns.len() as u64 == d_int, || format!("{tuple}: ran {} turns", state.turns.len()))?;
                    ensure(got == expected, || format!("{tuple}: ledger {got} != expected {expected}"))?;
                    let obs = c.ledger.observed();
                    ensure(
                        (obs.n_turns, obs.d_int, obs.llm_parsing, obs.nl_response) == (n_turns, d_int, llm_parsing, nl_response),
                        || format!("{tuple}: observed {obs:?}"),
                    )?;
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("{runs} configurations, ledger count exact"))
}

// ---------------------------------------------------------------------- RRF

fn rrf_oracle(rankings: &[Vec<u32>], weights: &[f64], k: f64) -> Vec<(u32, f64)> {
    let ids: BTreeSet<u32> = rankings.iter().flatten().copied().collect();
    let mut out: Vec<(u32, f64)> = ids
        .into_iter()
        .map(|id| {
            let mut s = 0.0;
            for (i, r) in rankings.iter().enumerate() {
                if let Some(pos) = r.iter().position(|x| *x == id) {
                    s += weights.get(i).copied().unwrap_or(1.0) / (k + (pos + 1) as f64);
                }
            }
            (id, s)
        })
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

fn rrf_equivalence() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x5EED_0001);
    for case in 0..1000 {
        let n_rankings = rng.gen_range(1..=6);
        let n_ids = rng.gen_range(1..=20u32);
        let pool: Vec<u32> = (0..n_ids).collect();
        let rankings: Vec<Vec<u32>> = (0..n_rankings)
            .map(|_| {
                let len = rng.gen_range(0..=pool.len());
                pool.choose_multiple(&mut rng, len).copied().collect()
            })
            .collect();
        let n_weights = rng.gen_range(0..=n_rankings);
        let weights: Vec<f64> = (0..n_weights).map(|_| [0.25, 0.5, 1.0, 1.5, 2.0][rng.gen_range(0..5)] * rng.gen_range(0.5..1.5)).collect();
        let got = rrf_fuse(&rankings, &weights, DEFAULT_RRF_K);
        let want = rrf_oracle(&rankings, &weights, DEFAULT_RRF_K);
        let same = got.len() == want.len() && got.iter().zip(&want).all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits());
        ensure(same, || format!("instance {case}: {rankings:?} w={weights:?}\n got {got:?}\nwant {want:?}"))?;
    }
    Ok("1000 instances, scores and order identical".into())
}

// --------------------------------------------------------------------- BM25

const VOCAB: &[&str] = &[
    "party", "notice", "term", "payment", "licensee", "software", "fee", "days", "written", "consent", "assign", "law",
    "court", "deliver", "goods", "buyer", "seller", "warranty", "liability", "damages", "insurance", "audit", "records",
    "terminate", "breach", "cure", "period", "renewal", "price", "invoice",
];

fn corpus_index(texts: &[String]) -> ChunkIndex {
    let source = texts.join("\n");
    let mut offset = 0;
    let chunks: Vec<Chunk> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let span = CharSpan::new(offset, offset + t.chars().count());
            offset = span.end + 1;
            Chunk {
                id: format!("c.txt#{i}n"),
                kind: ChunkKind::NodeLevel,
                text: t.clone(),
                core_span: span,
                node_path: vec![],
                doc_position: i + 1,
                filename: "c.txt".into(),
                summary: None,
            }
        })
        .collect();
    ChunkIndex::build(chunks, [("c.txt".to_string(), source)], None, "synthetic").expect("index builds")
}

fn bm25_exhaustive(texts: &[String], query: &str, k1: f64, b: f64) -> Vec<(usize, f64)> {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let mut out = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        let mut score = 0.0;
        let mut matched = false;
        for q in tokenize(query) {
            let tf = d.iter().filter(|t| **t == q).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|d| d.contains(&q)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let len = d.len() as f64;
            score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avgdl));
        }
        if matched {
            out.push((i, score));
        }
    }
    out
}

fn bm25_equivalence() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x5EED_0002);
    let mut queries = 0;
    for corpus in 0..60 {
        let n = rng.gen_range(1..=50);
        let texts: Vec<String> = (0..n)
            .map(|_| {
                let len = rng.gen_range(1..=40);
                (0..len).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" ")
            })
            .collect();
        let index = corpus_index(&texts);
        for _ in 0..10 {
            let qlen = rng.gen_range(1..=6);
            let query: Vec<&str> = (0..qlen).map(|_| if rng.gen_bool(0.1) { "unseen" } else { *VOCAB.choose(&mut rng).unwrap() }).collect();
            let query = query.join(" ");
            let got: Vec<(usize, u64)> = index.bm25_scores(&query, Default::default()).iter().map(|h| (h.chunk, h.score.to_bits())).collect();
            let want: Vec<(usize, u64)> = bm25_exhaustive(&texts, &query, 1.2, 0.75).iter().map(|(i, s)| (*i, s.to_bits())).collect();
            ensure(got == want, || format!("corpus {corpus}, query {query:?}: scores differ"))?;
            let top = index.bm25_search(&query, 100, 0.0).map_err(|e| e.to_string())?;
            let want_map: std::collections::HashMap<usize, u64> = want.iter().copied().collect();
            ensure(top.iter().all(|h| want_map.get(&h.chunk) == Some(&h.score.to_bits())), || format!("corpus {corpus}: search returned non-raw scores"))?;
            ensure(top.windows(2).all(|w| w[0].score >= w[1].score), || format!("corpus {corpus}: search not sorted"))?;
            queries += 1;
        }
    }
    Ok(format!("{queries} queries over 60 corpora of 1..50 chunks, bit-exact"))
}

// ------------------------------------------------------------------ metrics

fn random_span(rng: &mut StdRng, len: usize, allow_empty: bool) -> CharSpan {
    loop {
        let a = rng.gen_range(0..len);
        let b = rng.gen_range(a..=len.min(a + 80));
        if allow_empty || b > a {
            return CharSpan::new(a, b);
        }
    }
}

fn bitmap_pr(retrieved: &[CharSpan], truth: &[CharSpan], k: usize, len: usize) -> (f64, f64) {
    let mut r = vec![false; len];
    let mut t = vec![false; len];
    for s in retrieved.iter().take(k) {
        r[s.start..s.end].iter_mut().for_each(|x| *x = true);
    }
    for s in truth {
        t[s.start..s.end].iter_mut().for_each(|x| *x = true);
    }
    let hit = r.iter().zip(&t).filter(|(a, b)| **a && **b).count();
    let got = r.iter().filter(|x| **x).count();
    let total = t.iter().filter(|x| **x).count();
    let p = if got == 0 { 0.0 } else { hit as f64 / got as f64 };
    (p, hit as f64 / total as f64)
}

fn metric_oracles() -> Result<String, String> {
    const LEN: usize = 300;
    let mut rng = StdRng::seed_from_u64(0x5EED_0003);
    for case in 0..500 {
        let retrieved: Vec<CharSpan> = (0..rng.gen_range(0..=10)).map(|_| random_span(&mut rng, LEN, true)).collect();
        let mut truth: Vec<CharSpan> = (0..rng.gen_range(0..=4)).map(|_| random_span(&mut rng, LEN, true)).collect();
        truth.push(random_span(&mut rng, LEN, false));
        truth.shuffle(&mut rng);
        let k = rng.gen_range(1..=12);
        let got = char_pr_at_k(&retrieved, &truth, k).map_err(|e| e.to_string())?;
        let want = bitmap_pr(&retrieved, &truth, k, LEN);
        ensure(got.0.to_bits() == want.0.to_bits() && got.1.to_bits() == want.1.to_bits(), || {
            format!("case {case}: k={k} retrieved={retrieved:?} truth={truth:?}: got {got:?}, bitmap {want:?}")
        })?;
    }
    for case in 0..500 {
        let truth: Vec<CharSpan> = (0..rng.gen_range(1..=6)).map(|_| random_span(&mut rng, LEN, false)).collect();
        let oracle = perfect_oracle(&truth);
        for k in 1..=truth.len() + 3 {
            let (pc, _) = char_pr_at_k(&oracle, &truth, k).map_err(|e| e.to_string())?;
            let (ps, _) = span_pr_at_k(&oracle, &truth, k).map_err(|e| e.to_string())?;
            ensure(pc == 1.0 && ps == 1.0, || format!("perfect oracle case {case}, k={k}: precision {pc}/{ps}"))?;
        }
    }
    Ok("500 bitmap configurations exact; perfect oracle precision 1.0 at every k over 500 truth sets".into())
}

// --------------------------------------------------------------- divergence

fn span_char_divergence() -> Result<String, String> {
    let s = CharSpan::new;
    let mut fixtures: Vec<(Vec<CharSpan>, Vec<CharSpan>, usize)> = vec![
        (vec![s(120, 150)], vec![s(100, 200)], 1),
        (vec![s(10, 20), s(90, 100)], vec![s(0, 50), s(80, 160)], 2),
        (vec![s(5, 6)], vec![s(0, 1000)], 1),
        (vec![s(40, 60), s(300, 320)], vec![s(0, 100), s(250, 400)], 2),
    ];
    // A sentence of a real clause against the whole clause.
    let doc = ingest(NDA, "nda.txt", &IngestOptions::default(), &ClientSet::offline()).map_err(|e| e.to_string())?;
    let clause = doc.tree.sections().find(|n| n.text.contains("two years")).ok_or("clause missing")?;
    let word = clause.text.find("two years").unwrap();
    let sub = s(clause.span.start + word, clause.span.start + word + "two years".len());
    fixtures.push((vec![sub], vec![clause.span], 1));
    for (i, (got, truth, k)) in fixtures.iter().enumerate() {
        let (_, rc) = char_pr_at_k(got, truth, *k).map_err(|e| e.to_string())?;
        let (_, rs) = span_pr_at_k(got, truth, *k).map_err(|e| e.to_string())?;
        ensure(rs == 1.0 && rc < 1.0, || format!("fixture {i}: span recall {rs}, char recall {rc}"))?;
    }
    Ok(format!("{} sub-span fixtures: span recall 1.0 > char recall", fixtures.len()))
}

// ------------------------------------------------------------ tree round-trip

const SENTENCES: &[&str] = &[
    "The Supplier shall deliver the Goods to the Buyer's premises.",
    "Payment is due within thirty days of the invoice date.",
    "Each party shall keep the terms of this Agreement confidential.",
    "The Licensee may not reverse engineer the Software.",
    "Notices must be given in writing to the addresses stated above.",
    "Neither party is liable for delays caused by events beyond its control.",
    "The warranty period runs for twelve months from acceptance.",
    "Any amendment requires a written instrument signed by both parties.",
    "The Contractor shall maintain accurate books and records.",
    "Interest accrues on overdue amounts at the statutory rate.",
];

const TITLES: &[&str] = &["Definitions", "Delivery", "Payment", "Confidentiality", "Warranty", "Liability", "Termination", "General"];

fn sentence(rng: &mut StdRng, n: usize) -> String {
    (0..n).map(|_| *SENTENCES.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn synthetic_contract(rng: &mut StdRng, style: usize) -> String {
    let mut out = String::new();
    if rng.gen_bool(0.5) {
        out.push_str("THIS AGREEMENT is made between Alpha Ltd and Beta Inc.\n\n");
    }
    let sections = rng.gen_range(2..=5);
    for i in 1..=sections {
        let title = TITLES.choose(rng).unwrap();
        match style {
            0 => {
                out.push_str(&format!("{i}. {title}\n"));
                for j in 1..=rng.gen_range(1..=3) {
                    out.push_str(&format!("{i}.{j} {}\n", { let n = rng.gen_range(1..=2); sentence(rng, n) }));
                    if rng.gen_bool(0.3) {
                        out.push_str(&format!("(a) {}\n(b) {}\n", sentence(rng, 1), sentence(rng, 1)));
                    }
                }
            }
            1 => {
                let roman = ["I", "II", "III", "IV", "V"][i - 1];
                out.push_str(&format!("ARTICLE {roman}. {}\n", title.to_uppercase()));
                for j in 1..=rng.gen_range(1..=3) {
                    out.push_str(&format!("Section {i}.{j}. {}\n", { let n = rng.gen_range(1..=3); sentence(rng, n) }));
                }
            }
            2 => {
                out.push_str(&format!("# {title}\n\n"));
                out.push_str(&format!("{}\n\n", { let n = rng.gen_range(1..=3); sentence(rng, n) }));
                if rng.gen_bool(0.5) {
                    out.push_str(&format!("## {title} details\n\n{}\n\n", sentence(rng, 2)));
                }
            }
            _ => {
                out.push_str(&format!("{}\n\n", title.to_uppercase()));
                for _ in 0..rng.gen_range(1..=2) {
                    out.push_str(&format!("{}\n\n", { let n = rng.gen_range(1..=3); sentence(rng, n) }));
                }
            }
        }
    }
    out
}

fn unstructured(rng: &mut StdRng) -> String {
    let target = rng.gen_range(1200..6000);
    let mut s = String::new();
    while s.chars().count() < target {
        s.push_str(SENTENCES.choose(rng).unwrap().trim_end_matches('.').to_lowercase().as_str());
        s.push_str(if rng.gen_bool(0.2) { ";\n" } else { ", and " });
    }
    s
}

fn tree_round_trip() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0x5EED_0004);
    let opts = ParseOptions::default();
    for i in 0..50 {
        let text = synthetic_contract(&mut rng, i % 4);
        let tree = parse_document(&text, &format!("doc{i}.txt"), &opts);
        tree.validate().map_err(|e| format!("doc {i}: invalid tree: {e}"))?;
        ensure(tree.parse_mode == ParseMode::Structural, || format!("doc {i} (style {}): fell back to flat parsing", i % 4))?;
        ensure(tree.normalized_concatenation() == normalize_whitespace(&text), || format!("doc {i}: concatenation differs from source\n{text}"))?;
    }
    let mut windows = 0;
    for i in 0..10 {
        let text = unstructured(&mut rng);
        let tree = parse_document(&text, &format!("flat{i}.txt"), &opts);
        ensure(tree.parse_mode == ParseMode::FallbackFlat, || format!("unstructured {i}: parsed structurally"))?;
        let chars: Vec<char> = text.chars().collect();
        let expected: Vec<CharSpan> = (0..chars.len()).step_by(1000).map(|s| CharSpan::new(s, (s + 1000).min(chars.len()))).collect();
        let got: Vec<CharSpan> = tree.sections().map(|n| n.span).collect();
        ensure(got == expected, || format!("unstructured {i}: windows {got:?}, expected {expected:?}"))?;
        for n in tree.sections() {
            let want: String = chars[n.span.start..n.span.end].iter().collect();
            ensure(n.text == want, || format!("unstructured {i}: window text differs at {:?}", n.span))?;
        }
        windows += got.len();
    }
    Ok(format!("50/50 structured documents round-trip; 10/10 unstructured fall back to {windows} exact 1000-char windows"))
}

// -------------------------------------------------------------- termination

fn mock_with(override_role: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static) -> FnChat {
    let base = MockPipelineChat::never_stopping();
    FnChat::new(move |req| match override_role(req) {
        Some(text) => Ok(Completion::text(text)),
        None => base.complete(req),
    })
}

fn terminates(name: &str, chat: impl ChatClient + 'static, d_max: usize) -> Result<String, String> {
    let c = clients(chat);
    let doc = ingest(NDA, "nda.txt", &IngestOptions::default(), &c).map_err(|e| e.to_string())?;
    let brief = UserBrief::new("May the recipient share confidential information with employees?").map_err(|e| e.to_string())?;
    let mut observed = 0usize;
    let result = run_interrogation(brief, ResearchResources::document(&doc.index), d_max, &c, &InterrogatorOptions::default(), &mut |s: &InterrogationState| {
        observed = s.turns.len()
    });
    match result {
        Ok((report, state)) => {
            ensure(state.turns.len() <= d_max && observed <= d_max, || format!("{name}: {} turns > d_max {d_max}", state.turns.len()))?;
            report.validate(true).map_err(|e| format!("{name}: returned invalid report: {e}"))?;
            Ok(format!("{name}: report after {} turns", state.turns.len()))
        }
        Err(InterrogationFailure { error: AgentError::SchemaViolation { .. }, state }) => {
            ensure(state.turns.len() <= d_max, || format!("{name}: {} turns > d_max {d_max}", state.turns.len()))?;
            Ok(format!("{name}: SchemaViolation after {} turns", state.turns.len()))
        }
        Err(f) => Err(format!("{name}: untyped failure {}", f.error)),
    }
}

fn interrogation_termination() -> Result<String, String> {
    ensure(DEFAULT_D_MAX == 5 && EngineConfig::default().d_max == 5, || "default d_max is not 5".into())?;
    let mut notes = Vec::new();
    for d_max in 1..=5 {
        let c = clients(MockPipelineChat::never_stopping());
        let doc = ingest(NDA, "nda.txt", &IngestOptions::default(), &c).map_err(|e| e.to_string())?;
        let brief = UserBrief::new("How long does the agreement last?").map_err(|e| e.to_string())?;
        let (_, state) = run_interrogation(brief, ResearchResources::document(&doc.index), d_max, &c, &InterrogatorOptions::default(), &mut |_| {})
            .map_err(|f| format!("never-stopping d_max={d_max}: {f}"))?;
        ensure(state.turns.len() == d_max, || format!("never-stopping ran {} of {d_max} turns", state.turns.len()))?;
    }
    notes.push("never-stopping: exactly d_max turns for d_max 1..5".to_string());
    for d_max in [1, 3, 5] {
        notes.push(terminates(
            "always-duplicating",
            mock_with(|r| (r.call_role == covenant::llm::CallRole::InterrogatorQuestion).then(|| "What is the term of the agreement?".into())),
            d_max,
        )?);
        notes.push(terminates(
            "malformed-markdown",
            mock_with(|r| (r.call_role == covenant::llm::CallRole::ReportRefine).then(|| "Here are my thoughts, without any headings.".into())),
            d_max,
        )?);
        notes.push(terminates("identical-completions", FnChat::new(|_| Ok(Completion::text("Sure."))), d_max)?);
        notes.push(terminates(
            "always-stop-phrase",
            mock_with(|r| (r.call_role == covenant::llm::CallRole::InterrogatorQuestion).then(|| STOP_PHRASE.into())),
            d_max,
        )?);
    }
    notes.sort();
    notes.dedup();
    Ok(notes.join("; "))
}

// ---------------------------------------------------------- planted answers

const FILLER: &[&str] = &[
    "This Agreement is governed by the laws of the State of New York.",
    "Notices must be in writing and delivered to the addresses above.",
    "If any provision is held invalid, the remainder continues in effect.",
    "This Agreement is the entire agreement of the parties on its subject.",
    "Changes to this Agreement require a writing signed by both parties.",
    "Neither party may assign this Agreement without the other's consent.",
];

/// (distractor sharing vocabulary, planted clause, query)
const PLANTED: [(&str, &str, &str); 10] = [
    ("The Supplier shall deliver the goods within thirty days of the order.", "The Supplier shall keep an inventory of spare parts for seven years after final delivery.", "How long must the supplier keep spare parts in inventory?"),
    ("The Licensee shall install the Software only on its own servers.", "The Licensee may not sublicense the Software to any subsidiary without prior written consent.", "Can the licensee sublicense the software to a subsidiary?"),
    ("The parties shall first attempt to negotiate any dispute in good faith.", "Any dispute shall be resolved by arbitration seated in Geneva under the ICC Rules.", "Where is the arbitration of disputes seated?"),
    ("The Employee shall work forty hours each week.", "The Employee is entitled to twenty-five days of paid vacation each calendar year.", "How many days of paid vacation does the employee receive?"),
    ("The Tenant shall pay rent on the first day of each month.", "The Tenant shall pay a security deposit equal to three months of rent.", "What security deposit must the tenant pay?"),
    ("The Contractor shall perform the services with due care.", "The Contractor must carry professional liability insurance of at least five million dollars.", "What professional liability insurance must the contractor carry?"),
    ("Either party may terminate for material breach that remains uncured.", "Either party may terminate for convenience upon ninety days written notice.", "Can a party terminate for convenience, and on what notice?"),
    ("The Recipient shall use Confidential Information only for the Purpose.", "The Recipient shall destroy all Confidential Information within ten days of the Discloser's request.", "When must the recipient destroy the confidential information?"),
    ("Invoices are payable within thirty days of receipt.", "Late payments accrue interest at one and a half percent per month.", "What interest accrues on late payments?"),
    ("The Seller shall pack the Goods for ocean transport.", "The Buyer acquires title to the Goods when they are loaded onto the vessel.", "When does title to the goods pass to the buyer?"),
];

/// Planted document `i` and the character span of its planted clause.
fn planted_document(i: usize) -> (String, CharSpan) {
    let (distractor, planted, _) = PLANTED[i];
    let mut text = String::from("1. Definitions\n1.1 Capitalized terms have the meanings given in this Agreement.\n2. Obligations\n");
    text.push_str(&format!("2.1 {distractor}\n"));
    let start = text.chars().count();
    text.push_str(&format!("2.2 {planted}"));
    let span = CharSpan::new(start, text.chars().count());
    text.push_str("\n3. General\n");
    for (j, f) in FILLER.iter().enumerate() {
        text.push_str(&format!("3.{} {f}\n", j + 1));
    }
    (text, span)
}

fn planted_answer() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    fs::create_dir_all(dir.path().join("documents")).map_err(|e| e.to_string())?;
    let mut cases = String::new();
    for (i, (_, _, query)) in PLANTED.iter().enumerate() {
        let (text, span) = planted_document(i);
        fs::write(dir.path().join(format!("documents/doc{i}.txt")), &text).map_err(|e| e.to_string())?;
        let case = serde_json::json!({"case_id": format!("q{i}"), "query": query, "document_id": format!("doc{i}"), "spans": [[span.start, span.end]]});
        cases.push_str(&format!("{case}\n"));
    }
    fs::write(dir.path().join("cases.jsonl"), cases).map_err(|e| e.to_string())?;
    let c = ClientSet::offline();
    let retriever = PipelineRetriever { clients: c.clone(), config: RetrievalConfig::default() };
    let report = run_benchmark(dir.path(), &retriever, &IngestOptions::default(), &c, &[1]).map_err(|e| e.to_string())?;
    ensure(report.cases_evaluated == 10, || format!("only {} of 10 cases evaluated: {:?}", report.cases_evaluated, report.failures))?;
    let recall = report.row(1).ok_or("no k=1 row")?.recall_span;
    let hits = (recall * 10.0).round() as usize;
    ensure(hits >= 9, || format!("span recall@1 = 1.0 for {hits}/10 queries"))?;
    Ok(format!("span recall@1 = 1.0 for {hits}/10 queries"))
}

// ------------------------------------------------------------- report schema

fn check_report_shape(r: &Report, markdown: &str) -> Result<(), String> {
    for h in REPORT_HEADINGS {
        ensure(markdown.contains(h), || format!("missing section {h}"))?;
    }
    let numbers: Vec<u32> = r.sources.iter().map(|s| s.number).collect();
    let want: Vec<u32> = (1..=r.sources.len() as u32).collect();
    ensure(!numbers.is_empty() && numbers == want, || format!("source numbering {numbers:?}"))?;
    ensure(r.citations().iter().all(|c| numbers.contains(c)), || format!("dangling citation in {:?}", r.citations()))?;
    let reparsed = Report::parse_markdown(markdown).map_err(|e| format!("markdown does not parse: {e}"))?;
    ensure(&reparsed == r, || "rendered markdown does not round-trip".into())
}

fn report_schema() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let labels = [None, Some("ENTAILMENT"), Some("CONTRADICTION"), Some("NEUTRAL")];
    for i in 0..20 {
        let (text, _) = planted_document(i % 10);
        let query = PLANTED[i % 10].2;
        let mut mock = MockPipelineChat::stopping_after(1 + i % 4);
        if let Some(l) = labels[i % 4] {
            mock = mock.with_label(l);
        }
        let recorder = Arc::new(RecordingChat::new(mock));
        let rec_clients = ClientSet::uniform(recorder.clone(), Arc::new(HashEmbedder::default()), Arc::new(LexicalReranker));
        let doc = ingest(&text, "contract.txt", &IngestOptions::default(), &rec_clients).map_err(|e| e.to_string())?;
        let brief = UserBrief::new(query).map_err(|e| e.to_string())?;
        let run = |c: &ClientSet| run_interrogation(brief.clone(), ResearchResources::document(&doc.index), DEFAULT_D_MAX, c, &InterrogatorOptions::default(), &mut |_| {});
        let (recorded, _) = run(&rec_clients).map_err(|f| format!("recording {i}: {f}"))?;
        let cassette = dir.path().join(format!("run{i}.jsonl"));
        recorder.save(&cassette).map_err(|e| e.to_string())?;

        let replay = ReplayChat::load(&cassette).map_err(|e| e.to_string())?;
        let (report, state) = run(&clients(replay)).map_err(|f| format!("replay {i}: {f}"))?;
        ensure(report == recorded, || format!("replay {i}: report differs from recording"))?;
        check_report_shape(&report, &report.render()).map_err(|e| format!("replay {i}: {e}"))?;
        check_report_shape(&report, &state.report_markdown).map_err(|e| format!("replay {i} raw draft: {e}"))?;
        if let Some(l) = labels[i % 4] {
            let got = extract_nli_label(&report);
            ensure(format!("{got:?}").to_uppercase() == l, || format!("replay {i}: label {got:?}, planted {l}"))?;
        }
    }
    let fixture = "## Title: Sharing with employees\n\n### Summary:\nWhether the NDA lets the Recipient share Confidential Information with employees [1].\n\n### Legal Reasoning & Analysis:\nClause 1.1 allows disclosure to employees who need to know [1].\n\n### Preliminary Answer & Direction for Further Research:\nBased on the cited clause, the hypothesis appears to be ENTAILMENT.\n\n### Gaps & Next Questions:\n- Are contractors treated as employees?\n\n### Sources:\n1. \"may disclose Confidential Information to employees who need to know\" - Clause 1.1, nda.txt\n";
    let r = Report::parse_markdown(fixture)?;
    let label = extract_nli_label(&r);
    ensure(label == NliLabel::Entailment, || format!("fixture label {label:?}"))?;
    Ok("20/20 replayed reports have six sections and consecutive sources; fixture label ENTAILMENT".into())
}

// --------------------------------------------------------------- persistence

fn hits_bits(h: &[Hit]) -> Vec<(usize, u64)> {
    h.iter().map(|h| (h.chunk, h.score.to_bits())).collect()
}

fn persistence() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let embedder = HashEmbedder::default();
    let c = ClientSet::offline();
    let mut rng = StdRng::seed_from_u64(0x5EED_0005);
    let mut texts: Vec<(String, String)> = (0..4).map(|i| (format!("doc{i}.txt"), planted_document(i).0)).collect();
    texts.push(("flat.txt".into(), unstructured(&mut rng)));
    let queries: Vec<&str> = PLANTED.iter().map(|p| p.2).chain(["payment due", "governing law of New York", "zzz"]).collect();
    let mut compared = 0;
    for (name, text) in &texts {
        let doc = ingest(text, name, &IngestOptions::default(), &c).map_err(|e| e.to_string())?;
        let path = dir.path().join(name);
        doc.index.save(&path).map_err(|e| e.to_string())?;
        let loaded = ChunkIndex::load(&path).map_err(|e| e.to_string())?;
        ensure(loaded.chunks() == doc.index.chunks(), || format!("{name}: chunks differ"))?;
        for q in &queries {
            let before = hits_bits(&doc.index.bm25_search(q, 100, 0.6).map_err(|e| e.to_string())?);
            let after = hits_bits(&loaded.bm25_search(q, 100, 0.6).map_err(|e| e.to_string())?);
            ensure(before == after, || format!("{name}: bm25 results differ for {q:?}"))?;
            let v = embedder.embed_one(q).map_err(|e| e.to_string())?;
            let before = hits_bits(&doc.index.dense_search(&v, 100).map_err(|e| e.to_string())?);
            let after = hits_bits(&loaded.dense_search(&v, 100).map_err(|e| e.to_string())?);
            ensure(before == after, || format!("{name}: dense results differ for {q:?}"))?;
            let before = retrieve(q, &doc.index, &c, &RetrievalConfig::default()).map_err(|e| e.to_string())?;
            let after = retrieve(q, &loaded, &c, &RetrievalConfig::default()).map_err(|e| e.to_string())?;
            ensure(serde_json::to_string(&before).unwrap() == serde_json::to_string(&after).unwrap(), || format!("{name}: retrieval differs for {q:?}"))?;
            compared += 1;
        }
        let again = dir.path().join(format!("{name}.again"));
        loaded.save(&again).map_err(|e| e.to_string())?;
        for f in ["chunks.jsonl", "postings.bin", "vectors.f32", "meta.json", "sources.jsonl"] {
            let a = fs::read(path.join(f)).map_err(|e| format!("{f}: {e}"))?;
            let b = fs::read(again.join(f)).map_err(|e| format!("{f}: {e}"))?;
            ensure(a == b, || format!("{name}: {f} changes on re-save"))?;
        }
    }
    Ok(format!("{compared} query/index pairs identical after save+load (bm25, dense, full pipeline)"))
}

// -------------------------------------------------------------------- runner

fn main() {
    let criteria: [(&str, Check, Option<u64>); 10] = [
        ("cost-model identity", cost_identity, Some(10)),
        ("RRF oracle equivalence", rrf_equivalence, Some(5)),
        ("BM25 oracle equivalence", bm25_equivalence, Some(5)),
        ("metric oracles", metric_oracles, Some(5)),
        ("span-vs-char divergence", span_char_divergence, None),
        ("tree round-trip and flat fallback", tree_round_trip, None),
        ("interrogation termination", interrogation_termination, None),
        ("planted-answer retrieval", planted_answer, Some(30)),
        ("report schema under cassette replay", report_schema, None),
        ("persistence round-trip", persistence, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let (tx, rx) = mpsc::channel();
        let start = Instant::now();
        std::thread::spawn(move || {
            let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
            let _ = tx.send(outcome);
        });
        let limit = Duration::from_secs(budget.unwrap_or(60) * 2);
        let outcome = rx.recv_timeout(limit).unwrap_or_else(|_| Err(format!("no result within {limit:?}")));
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if elapsed > Duration::from_secs(b) => Err(format!("took {elapsed:.2?}, budget {b} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{elapsed:.2?}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
