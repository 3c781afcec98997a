//! C ABI over the covenant engine.
//!
//! Conventions:
//! - every fallible function returns a [`CovStatus`]; on failure
//!   [`cov_last_error`] describes the problem for the calling thread;
//! - strings handed out by the library are released with [`cov_string_free`];
//! - documents are opaque handles released with [`cov_document_free`].
//!
//! Documents are processed with the offline clients (feature-hash embedder,
//! lexical reranker, deterministic chat mock), so no network is involved.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use covenant::eval::{char_pr_at_k, span_pr_at_k, EvalError};
use covenant::llm::{expected_call_count, ClientSet};
use covenant::pipeline::{ingest, IngestOptions, IngestedDocument};
use covenant::retrieval::{retrieve, RetrievalConfig};
use covenant::span::CharSpan;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Upstream = 4,
    Io = 5,
    Panic = 6,
}

/// Half-open character range `[start, end)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CovSpan {
    pub start: usize,
    pub end: usize,
}

/// Opaque ingested document.
pub struct CovDocument {
    doc: IngestedDocument,
    clients: ClientSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: CovStatus, msg: impl Into<String>) -> CovStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> CovStatus) -> CovStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CovStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, CovStatus> {
    if p.is_null() {
        return Err(fail(CovStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(CovStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn spans_arg(p: *const CovSpan, len: usize, name: &str) -> Result<Vec<CharSpan>, CovStatus> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(fail(CovStatus::NullPointer, format!("{name} is null")));
    }
    let raw = std::slice::from_raw_parts(p, len);
    raw.iter()
        .map(|s| {
            if s.start <= s.end {
                Ok(CharSpan::new(s.start, s.end))
            } else {
                Err(fail(CovStatus::InvalidArgument, format!("{name}: start {} > end {}", s.start, s.end)))
            }
        })
        .collect()
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> CovStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            CovStatus::Ok
        }
        Err(_) => fail(CovStatus::InvalidArgument, "output contains a NUL byte"),
    }
}

macro_rules! try_arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cov_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cov_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse, chunk and index `text`. On success `*out` owns a new handle.
///
/// # Safety
/// `text` and `filename` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cov_document_ingest(text: *const c_char, filename: *const c_char, out: *mut *mut CovDocument) -> CovStatus {
    guarded(|| {
        if out.is_null() {
            return fail(CovStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = try_arg!(str_arg(text, "text"));
        let filename = try_arg!(str_arg(filename, "filename"));
        if filename.trim().is_empty() {
            return fail(CovStatus::InvalidArgument, "filename is empty");
        }
        let clients = ClientSet::offline();
        match ingest(text, filename, &IngestOptions::default(), &clients) {
            Ok(doc) => {
                *out = Box::into_raw(Box::new(CovDocument { doc, clients }));
                CovStatus::Ok
            }
            Err(e) => fail(CovStatus::Upstream, e.to_string()),
        }
    })
}

/// Release a document. Null is ignored.
///
/// # Safety
/// `doc` must come from [`cov_document_ingest`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cov_document_free(doc: *mut CovDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// Number of chunks, or 0 for a null handle.
///
/// # Safety
/// `doc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cov_document_chunk_count(doc: *const CovDocument) -> usize {
    doc.as_ref().map_or(0, |d| d.doc.chunks.len())
}

/// 1 when the document was parsed structurally, 0 for the flat fallback,
/// -1 for a null handle.
///
/// # Safety
/// `doc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cov_document_is_structural(doc: *const CovDocument) -> i32 {
    match doc.as_ref() {
        Some(d) => i32::from(d.doc.tree.parse_mode == covenant::doctree::ParseMode::Structural),
        None => -1,
    }
}

/// Chunks as JSON lines into `*out` (free with [`cov_string_free`]).
///
/// # Safety
/// `doc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cov_document_chunks_jsonl(doc: *const CovDocument, out: *mut *mut c_char) -> CovStatus {
    guarded(|| {
        let (Some(d), false) = (doc.as_ref(), out.is_null()) else {
            return fail(CovStatus::NullPointer, "doc or out is null");
        };
        let mut buf = Vec::new();
        if let Err(e) = covenant::chunker::write_jsonl(&d.doc.chunks, &mut buf) {
            return fail(CovStatus::Io, e.to_string());
        }
        put_string(out, String::from_utf8_lossy(&buf).into_owned())
    })
}

/// Run the retrieval pipeline for `query` and write the result as JSON
/// into `*out`; at most `top_k` spans are kept.
///
/// # Safety
/// `doc` must be a live handle, `query` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cov_document_search(doc: *const CovDocument, query: *const c_char, top_k: usize, out: *mut *mut c_char) -> CovStatus {
    guarded(|| {
        let (Some(d), false) = (doc.as_ref(), out.is_null()) else {
            return fail(CovStatus::NullPointer, "doc or out is null");
        };
        let query = try_arg!(str_arg(query, "query"));
        if top_k == 0 {
            return fail(CovStatus::InvalidArgument, "top_k must be positive");
        }
        let config = RetrievalConfig { answer_top_k: top_k, ..Default::default() };
        match retrieve(query, &d.doc.index, &d.clients, &config) {
            Ok(r) => match serde_json::to_string(&r.to_json()) {
                Ok(s) => put_string(out, s),
                Err(e) => fail(CovStatus::Io, e.to_string()),
            },
            Err(e) => fail(CovStatus::Upstream, e.to_string()),
        }
    })
}

/// Persist the document's index into directory `dir`.
///
/// # Safety
/// `doc` must be a live handle and `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cov_document_save_index(doc: *const CovDocument, dir: *const c_char) -> CovStatus {
    guarded(|| {
        let Some(d) = doc.as_ref() else {
            return fail(CovStatus::NullPointer, "doc is null");
        };
        let dir = try_arg!(str_arg(dir, "dir"));
        match d.doc.index.save(Path::new(dir)) {
            Ok(()) => CovStatus::Ok,
            Err(e) => fail(CovStatus::Io, e.to_string()),
        }
    })
}

/// Closed-form number of model calls for one session.
#[no_mangle]
pub extern "C" fn cov_expected_call_count(n_turns: u64, d_int: u64, llm_parsing: bool, nl_response: bool) -> u64 {
    expected_call_count(n_turns, d_int, llm_parsing, nl_response)
}

type Metric = fn(&[CharSpan], &[CharSpan], usize) -> Result<(f64, f64), EvalError>;

#[allow(clippy::too_many_arguments)]
unsafe fn metric(
    f: Metric,
    retrieved: *const CovSpan,
    n_retrieved: usize,
    truth: *const CovSpan,
    n_truth: usize,
    k: usize,
    precision: *mut f64,
    recall: *mut f64,
) -> CovStatus {
    guarded(|| {
        if precision.is_null() || recall.is_null() {
            return fail(CovStatus::NullPointer, "precision or recall is null");
        }
        let r = try_arg!(spans_arg(retrieved, n_retrieved, "retrieved"));
        let t = try_arg!(spans_arg(truth, n_truth, "truth"));
        match f(&r, &t, k) {
            Ok((p, rc)) => {
                *precision = p;
                *recall = rc;
                CovStatus::Ok
            }
            Err(e) => fail(CovStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Character-level precision and recall of the top `k` retrieved spans.
///
/// # Safety
/// Span pointers must reference the stated number of elements (or be null
/// with a zero length); `precision` and `recall` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cov_char_pr_at_k(
    retrieved: *const CovSpan,
    n_retrieved: usize,
    truth: *const CovSpan,
    n_truth: usize,
    k: usize,
    precision: *mut f64,
    recall: *mut f64,
) -> CovStatus {
    metric(char_pr_at_k, retrieved, n_retrieved, truth, n_truth, k, precision, recall)
}

/// Span-level (overlap hit) precision and recall of the top `k` spans.
///
/// # Safety
/// As for [`cov_char_pr_at_k`].
#[no_mangle]
pub unsafe extern "C" fn cov_span_pr_at_k(
    retrieved: *const CovSpan,
    n_retrieved: usize,
    truth: *const CovSpan,
    n_truth: usize,
    k: usize,
    precision: *mut f64,
    recall: *mut f64,
) -> CovStatus {
    metric(span_pr_at_k, retrieved, n_retrieved, truth, n_truth, k, precision, recall)
}
