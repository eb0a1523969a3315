#ifndef PASA_H
#define PASA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PasaStatus {
  PASA_STATUS_OK = 0,
  PASA_STATUS_NULL_POINTER = 1,
  PASA_STATUS_INVALID_ARGUMENT = 2,
  PASA_STATUS_DIMENSION = 3,
  PASA_STATUS_RANK_DEFICIENT = 4,
  PASA_STATUS_NON_CONVERGENCE = 5,
  PASA_STATUS_SEPARATION = 6,
  PASA_STATUS_SINGULAR = 7,
  PASA_STATUS_NUMERICAL = 8,
  PASA_STATUS_SCHEMA = 9,
  PASA_STATUS_PANIC = 10,
} PasaStatus;

typedef enum PasaFamily {
  PASA_FAMILY_GAUSSIAN = 0,
  PASA_FAMILY_BERNOULLI = 1,
} PasaFamily;

typedef struct PasaBlockSummary PasaBlockSummary;

typedef struct PasaEstimate PasaEstimate;

/**
 * Streaming state for one block.
 */
typedef struct PasaStream PasaStream;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *pasa_last_error_message(void);

/**
 * Starts an empty stream for a block with `p` coefficients.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum PasaStatus pasa_stream_new(enum PasaFamily family, size_t p, struct PasaStream **out);

/**
 * Feeds `n` rows: `y` has `n` entries and `x` is `n * p`, row-major.
 * The first push fits the batch from scratch; later pushes apply the
 * renewable update. On failure the stream keeps its previous state.
 *
 * # Safety
 * `stream` must come from `pasa_stream_new`; `y` and `x` must point to
 * `n` and `n * p` readable doubles.
 */
enum PasaStatus pasa_stream_push(struct PasaStream *stream,
                                 const double *y,
                                 const double *x,
                                 size_t n);

/**
 * Rows consumed so far.
 *
 * # Safety
 * `stream` must come from `pasa_stream_new` and `n_seen` must be writable.
 */
enum PasaStatus pasa_stream_rows(const struct PasaStream *stream, size_t *n_seen);

/**
 * Snapshot of the stream as a block summary. The stream stays usable.
 *
 * # Safety
 * `stream` must come from `pasa_stream_new` and `out` must be writable.
 */
enum PasaStatus pasa_stream_finalize(const struct PasaStream *stream,
                                     size_t block_id,
                                     struct PasaBlockSummary **out);

/**
 * # Safety
 * `stream` must come from `pasa_stream_new` or be null; it is invalid afterwards.
 */
void pasa_stream_free(struct PasaStream *stream);

/**
 * Serializes a summary to a newly allocated JSON string; release it with
 * `pasa_string_free`.
 *
 * # Safety
 * `summary` must be a live handle and `out` writable.
 */
enum PasaStatus pasa_summary_to_json(const struct PasaBlockSummary *summary, char **out);

/**
 * # Safety
 * `json` must be a nul-terminated string and `out` writable.
 */
enum PasaStatus pasa_summary_from_json(const char *json, struct PasaBlockSummary **out);

/**
 * # Safety
 * `summary` must be a live handle or null.
 */
void pasa_summary_free(struct PasaBlockSummary *summary);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void pasa_string_free(char *s);

/**
 * Combines `k` block summaries.
 *
 * # Safety
 * `summaries` must point to `k` live summary handles and `out` be writable.
 */
enum PasaStatus pasa_combine(const struct PasaBlockSummary *const *summaries,
                             size_t k,
                             struct PasaEstimate **out);

/**
 * Number of coefficients.
 *
 * # Safety
 * `est` must be a live handle and `p` writable.
 */
enum PasaStatus pasa_estimate_dim(const struct PasaEstimate *est, size_t *p);

/**
 * Copies the `p` coefficients into `beta`.
 *
 * # Safety
 * `est` must be a live handle and `beta` point to `len` writable doubles.
 */
enum PasaStatus pasa_estimate_beta(const struct PasaEstimate *est, double *beta, size_t len);

/**
 * Copies the `p x p` covariance, row-major, into `cov`.
 *
 * # Safety
 * `est` must be a live handle and `cov` point to `len` writable doubles.
 */
enum PasaStatus pasa_estimate_cov(const struct PasaEstimate *est, double *cov, size_t len);

/**
 * Wald intervals at `level` (e.g. 0.95); each output holds `len = p` doubles.
 *
 * # Safety
 * `est` must be a live handle and each output point to `len` writable doubles.
 */
enum PasaStatus pasa_estimate_wald(const struct PasaEstimate *est,
                                   double level,
                                   double *lower,
                                   double *upper,
                                   double *se,
                                   size_t len);

/**
 * # Safety
 * `est` must be a live handle or null.
 */
void pasa_estimate_free(struct PasaEstimate *est);

/**
 * Library version as a static nul-terminated string.
 */
const char *pasa_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PASA_H */
