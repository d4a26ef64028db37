#ifndef PATENTFORGE_H
#define PATENTFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PfStatus {
  PF_STATUS_OK = 0,
  PF_STATUS_NULL_ARGUMENT = 1,
  PF_STATUS_INVALID_UTF8 = 2,
  PF_STATUS_PARSE_ERROR = 3,
  PF_STATUS_INVALID_ARGUMENT = 4,
  PF_STATUS_NOT_FOUND = 5,
  PF_STATUS_GENERATION_FAILED = 6,
  PF_STATUS_PANIC = 99,
} PfStatus;

/**
 * Claims, figures and confirmed mappings of one drafting session.
 */
typedef struct PfPipeline PfPipeline;

/**
 * Similarity of one feature/component pair.
 */
typedef struct PfScore {
  double cosine;
  double bleu1;
  double bleu2;
  double combined;
} PfScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string. Do not free.
 */
const char *pf_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next
 * call into the library from the same thread. Do not free.
 */
const char *pf_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned through an `out` parameter of this library,
 * not yet freed.
 */
void pf_string_free(char *s);

/**
 * Scores a feature against a component name.
 *
 * # Safety
 * `feature` and `component` must be valid NUL-terminated strings; `out` must point
 * to writable memory for one [`PfScore`].
 */
enum PfStatus pf_score_pair(const char *feature, const char *component, struct PfScore *out);

/**
 * Parses claim text into a JSON array of claims.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a writable pointer.
 */
enum PfStatus pf_parse_claims_json(const char *text, char **out);

/**
 * Strips markup from generated text, returning plain specification text.
 *
 * # Safety
 * `raw` must be a valid NUL-terminated string and `out` a writable pointer.
 */
enum PfStatus pf_clean_specification(const char *raw, char **out);

/**
 * Creates an empty pipeline. `threshold` must lie in [0, 1] and `k` be at least 1.
 *
 * # Safety
 * `out` must be a writable pointer. Release the handle with [`pf_pipeline_free`].
 */
enum PfStatus pf_pipeline_new(double threshold, size_t k, struct PfPipeline **out);

/**
 * # Safety
 * `p` must be NULL or a handle from [`pf_pipeline_new`], not yet freed.
 */
void pf_pipeline_free(struct PfPipeline *p);

/**
 * Replaces the claims. Confirmed mappings are cleared.
 *
 * # Safety
 * `p` must be a live handle and `text` a valid NUL-terminated string.
 */
enum PfStatus pf_pipeline_load_claims(struct PfPipeline *p, const char *text);

/**
 * Replaces the figures from a JSON array of `{"source_label", "raw_text"}` pages.
 * Confirmed mappings are cleared.
 *
 * # Safety
 * `p` must be a live handle and `pages_json` a valid NUL-terminated string.
 */
enum PfStatus pf_pipeline_load_drawings_json(struct PfPipeline *p, const char *pages_json);

/**
 * Ranked mapping suggestions as JSON (`{"entries": [...]}`). Nothing is stored.
 *
 * # Safety
 * `p` must be a live handle and `out` a writable pointer.
 */
enum PfStatus pf_pipeline_suggest(struct PfPipeline *p, char **out);

/**
 * Confirms `feature_id` (e.g. "1-0") -> `component_ref` (e.g. "1:104").
 *
 * # Safety
 * `p` must be a live handle; both ids must be valid NUL-terminated strings.
 */
enum PfStatus pf_pipeline_confirm(struct PfPipeline *p,
                                  const char *feature_id,
                                  const char *component_ref);

/**
 * Generates with the built-in mock backend and returns the cleaned specification.
 * Features without a confirmed mapping are skipped unless `allow_unmapped`.
 *
 * # Safety
 * `p` must be a live handle and `out` a writable pointer.
 */
enum PfStatus pf_pipeline_generate_mock(struct PfPipeline *p,
                                        bool allow_unmapped,
                                        bool numbered,
                                        char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATENTFORGE_H */
