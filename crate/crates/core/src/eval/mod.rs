//! Retrieval benchmark: case loading, per-case retrieval and metric tables.
//!
//! A corpus directory holds `cases.jsonl` (one
//! `{"case_id", "query", "document_id", "spans": [[start, end], ...]}` per
//! line, character offsets) and `documents/`, whose files are named by
//! document id (a `.txt` or `.md` extension is also accepted).

mod metrics;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{char_pr_at_k, char_volume_stats, perfect_oracle, span_pr_at_k};

use crate::llm::ClientSet;
use crate::pipeline::{ingest, IngestOptions, IngestedDocument};
use crate::retrieval::{retrieve, RetrievalConfig};
use crate::span::{merge_spans, CharSpan};

pub const DEFAULT_K_GRID: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corpus has no {0}")]
    EmptyCorpus(&'static str),
    #[error("{path}: {message}")]
    BadInput { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub case_id: String,
    pub query: String,
    pub document_id: String,
    #[serde(rename = "spans")]
    pub ground_truth: Vec<CharSpan>,
}

/// Read `cases.jsonl`. Overlapping truth spans are merged, each merge
/// adding a warning.
pub fn load_cases(path: &Path) -> Result<(Vec<BenchmarkCase>, Vec<String>), EvalError> {
    let text = fs::read_to_string(path)?;
    let mut cases = Vec::new();
    let mut warnings = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut case: BenchmarkCase = serde_json::from_str(line)
            .map_err(|e| EvalError::BadInput { path: path.to_path_buf(), message: format!("line {}: {e}", n + 1) })?;
        if case.ground_truth.iter().any(|s| s.start > s.end) {
            return Err(EvalError::BadInput { path: path.to_path_buf(), message: format!("line {}: span with start after end", n + 1) });
        }
        let merged = merge_spans(&case.ground_truth);
        if merged.len() != case.ground_truth.iter().filter(|s| !s.is_empty()).count() {
            warnings.push(format!("case {}: overlapping ground-truth spans merged", case.case_id));
        }
        case.ground_truth = merged;
        cases.push(case);
    }
    Ok((cases, warnings))
}

/// Produces ranked spans for one case; the document has already been
/// ingested with the benchmark's options.
pub trait CaseRetriever: Sync {
    fn retrieve(&self, case: &BenchmarkCase, document: &IngestedDocument) -> Result<Vec<CharSpan>, String>;
}

/// Returns the ground truth: the upper bound of any retriever.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleRetriever;

impl CaseRetriever for OracleRetriever {
    fn retrieve(&self, case: &BenchmarkCase, _: &IngestedDocument) -> Result<Vec<CharSpan>, String> {
        Ok(perfect_oracle(&case.ground_truth))
    }
}

/// The in-document retrieval pipeline, called directly with the case query.
#[derive(Clone)]
pub struct PipelineRetriever {
    pub clients: ClientSet,
    pub config: RetrievalConfig,
}

impl CaseRetriever for PipelineRetriever {
    fn retrieve(&self, case: &BenchmarkCase, document: &IngestedDocument) -> Result<Vec<CharSpan>, String> {
        let r = retrieve(&case.query, &document.index, &self.clients, &self.config).map_err(|e| e.to_string())?;
        Ok(r.spans.iter().map(|s| s.core_span).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: usize,
    pub precision_char: f64,
    pub recall_char: f64,
    pub precision_span: f64,
    pub recall_span: f64,
    pub avg_chars_retrieved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub cases_total: usize,
    pub cases_evaluated: usize,
    pub failures: Vec<CaseFailure>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn row(&self, k: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,precision_char,recall_char,precision_span,recall_span,avg_chars_retrieved\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.k, r.precision_char, r.recall_char, r.precision_span, r.recall_span, r.avg_chars_retrieved
            ));
        }
        s
    }

    /// Write `metrics.csv` and `metrics.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.to_csv())?;
        let mut f = fs::File::create(dir.join("metrics.json"))?;
        serde_json::to_writer_pretty(&mut f, self).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Per-case metrics at every k.
#[derive(Debug, Clone)]
pub struct CaseScores {
    pub case_id: String,
    pub retrieved: Vec<CharSpan>,
    pub per_k: Vec<(f64, f64, f64, f64)>,
}

pub fn score_case(case: &BenchmarkCase, retrieved: Vec<CharSpan>, k_grid: &[usize]) -> Result<CaseScores, EvalError> {
    let per_k = k_grid
        .iter()
        .map(|&k| {
            let (pc, rc) = char_pr_at_k(&retrieved, &case.ground_truth, k)?;
            let (ps, rs) = span_pr_at_k(&retrieved, &case.ground_truth, k)?;
            Ok((pc, rc, ps, rs))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(CaseScores { case_id: case.case_id.clone(), retrieved, per_k })
}

/// Average per-case scores in case order.
pub fn aggregate(scores: &[CaseScores], k_grid: &[usize]) -> Vec<MetricsRow> {
    let volumes = char_volume_stats(&scores.iter().map(|s| s.retrieved.clone()).collect::<Vec<_>>(), k_grid);
    let n = scores.len().max(1) as f64;
    k_grid
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut sums = [0.0f64; 4];
            for s in scores {
                let (a, b, c, d) = s.per_k[i];
                sums[0] += a;
                sums[1] += b;
                sums[2] += c;
                sums[3] += d;
            }
            MetricsRow {
                k,
                precision_char: sums[0] / n,
                recall_char: sums[1] / n,
                precision_span: sums[2] / n,
                recall_span: sums[3] / n,
                avg_chars_retrieved: volumes[i].1,
            }
        })
        .collect()
}

fn find_document(dir: &Path, id: &str) -> Option<PathBuf> {
    [id.to_string(), format!("{id}.txt"), format!("{id}.md")].into_iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

/// Index every referenced document, retrieve for every case (in parallel),
/// score and aggregate. Case-level failures are collected, not fatal.
pub fn run_benchmark(
    corpus_dir: &Path,
    retriever: &dyn CaseRetriever,
    ingest_options: &IngestOptions,
    clients: &ClientSet,
    k_grid: &[usize],
) -> Result<MetricsReport, EvalError> {
    if k_grid.is_empty() || k_grid.contains(&0) {
        return Err(EvalError::InvalidK);
    }
    let cases_path = corpus_dir.join("cases.jsonl");
    if !cases_path.is_file() {
        return Err(EvalError::EmptyCorpus("cases.jsonl"));
    }
    let (cases, mut warnings) = load_cases(&cases_path)?;
    if cases.is_empty() {
        return Err(EvalError::EmptyCorpus("cases"));
    }
    let doc_dir = corpus_dir.join("documents");
    let mut documents: BTreeMap<String, Result<IngestedDocument, String>> = BTreeMap::new();
    for case in &cases {
        if documents.contains_key(&case.document_id) {
            continue;
        }
        let doc = match find_document(&doc_dir, &case.document_id) {
            None => Err(format!("document {} not found in {}", case.document_id, doc_dir.display())),
            Some(p) => fs::read_to_string(&p)
                .map_err(|e| format!("{}: {e}", p.display()))
                .and_then(|text| ingest(&text, &case.document_id, ingest_options, clients).map_err(|e| e.to_string())),
        };
        documents.insert(case.document_id.clone(), doc);
    }
    if documents.values().all(Result::is_err) {
        return Err(EvalError::EmptyCorpus("readable documents"));
    }

    let outcomes: Vec<Result<CaseScores, CaseFailure>> = cases
        .par_iter()
        .map(|case| {
            let fail = |error: String| CaseFailure { case_id: case.case_id.clone(), error };
            let doc = documents[&case.document_id].as_ref().map_err(|e| fail(e.clone()))?;
            let len = doc.tree.source_text.chars().count();
            if case.ground_truth.iter().any(|s| s.end > len) {
                return Err(fail(format!("ground truth extends past the document ({len} characters)")));
            }
            let retrieved = retriever.retrieve(case, doc).map_err(fail)?;
            score_case(case, retrieved, k_grid).map_err(|e| fail(e.to_string()))
        })
        .collect();

    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(s) => scores.push(s),
            Err(f) => failures.push(f),
        }
    }
    warnings.extend(failures.iter().map(|f| format!("case {} failed: {}", f.case_id, f.error)));
    Ok(MetricsReport {
        rows: aggregate(&scores, k_grid),
        cases_total: cases.len(),
        cases_evaluated: scores.len(),
        failures,
        warnings,
    })
}
