#ifndef COVENANT_H
#define COVENANT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CovStatus {
  COV_STATUS_OK = 0,
  COV_STATUS_NULL_POINTER = 1,
  COV_STATUS_INVALID_UTF8 = 2,
  COV_STATUS_INVALID_ARGUMENT = 3,
  COV_STATUS_UPSTREAM = 4,
  COV_STATUS_IO = 5,
  COV_STATUS_PANIC = 6,
} CovStatus;

/**
 * Opaque ingested document.
 */
typedef struct CovDocument CovDocument;

/**
 * Half-open character range `[start, end)`.
 */
typedef struct CovSpan {
  size_t start;
  size_t end;
} CovSpan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cov_last_error(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void cov_string_free(char *s);

/**
 * Parse, chunk and index `text`. On success `*out` owns a new handle.
 *
 * # Safety
 * `text` and `filename` must be NUL-terminated; `out` must be writable.
 */
enum CovStatus cov_document_ingest(const char *text,
                                   const char *filename,
                                   struct CovDocument **out);

/**
 * Release a document. Null is ignored.
 *
 * # Safety
 * `doc` must come from [`cov_document_ingest`] and not have been freed.
 */
void cov_document_free(struct CovDocument *doc);

/**
 * Number of chunks, or 0 for a null handle.
 *
 * # Safety
 * `doc` must be null or a live handle.
 */
size_t cov_document_chunk_count(const struct CovDocument *doc);

/**
 * 1 when the document was parsed structurally, 0 for the flat fallback,
 * -1 for a null handle.
 *
 * # Safety
 * `doc` must be null or a live handle.
 */
int32_t cov_document_is_structural(const struct CovDocument *doc);

/**
 * Chunks as JSON lines into `*out` (free with [`cov_string_free`]).
 *
 * # Safety
 * `doc` must be a live handle; `out` must be writable.
 */
enum CovStatus cov_document_chunks_jsonl(const struct CovDocument *doc, char **out);

/**
 * Run the retrieval pipeline for `query` and write the result as JSON
 * into `*out`; at most `top_k` spans are kept.
 *
 * # Safety
 * `doc` must be a live handle, `query` NUL-terminated, `out` writable.
 */
enum CovStatus cov_document_search(const struct CovDocument *doc,
                                   const char *query,
                                   size_t top_k,
                                   char **out);

/**
 * Persist the document's index into directory `dir`.
 *
 * # Safety
 * `doc` must be a live handle and `dir` NUL-terminated.
 */
enum CovStatus cov_document_save_index(const struct CovDocument *doc, const char *dir);

/**
 * Closed-form number of model calls for one session.
 */
uint64_t cov_expected_call_count(uint64_t n_turns,
                                 uint64_t d_int,
                                 bool llm_parsing,
                                 bool nl_response);

/**
 * Character-level precision and recall of the top `k` retrieved spans.
 *
 * # Safety
 * Span pointers must reference the stated number of elements (or be null
 * with a zero length); `precision` and `recall` must be writable.
 */
enum CovStatus cov_char_pr_at_k(const struct CovSpan *retrieved,
                                size_t n_retrieved,
                                const struct CovSpan *truth,
                                size_t n_truth,
                                size_t k,
                                double *precision,
                                double *recall);

/**
 * Span-level (overlap hit) precision and recall of the top `k` spans.
 *
 * # Safety
 * As for [`cov_char_pr_at_k`].
 */
enum CovStatus cov_span_pr_at_k(const struct CovSpan *retrieved,
                                size_t n_retrieved,
                                const struct CovSpan *truth,
                                size_t n_truth,
                                size_t k,
                                double *precision,
                                double *recall);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVENANT_H */
