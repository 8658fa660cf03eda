#ifndef TREEEM_H
#define TREEEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum TreeemStatus {
  TREEEM_STATUS_OK = 0,
  TREEEM_STATUS_NULL_POINTER = 1,
  TREEEM_STATUS_INVALID_ARGUMENT = 2,
  TREEEM_STATUS_DIMENSION_MISMATCH = 3,
  TREEEM_STATUS_NOT_POSITIVE_DEFINITE = 4,
  TREEEM_STATUS_NUMERICAL = 5,
  TREEEM_STATUS_IO = 6,
  TREEEM_STATUS_PANIC = 7,
} TreeemStatus;

/*
 Symmetric positive definite covariance matrix.
 */
typedef struct TreeemCov TreeemCov;

/*
 Linear observation model `Y = H X + W`.
 */
typedef struct TreeemModel TreeemModel;

/*
 Observation set, one sample per row.
 */
typedef struct TreeemObs TreeemObs;

/*
 Per-iteration record of an EM run.
 */
typedef struct TreeemTrace TreeemTrace;

/*
 Chow-Liu fit: tree edges, tree covariance, KL divergence.
 */
typedef struct TreeemTreeFit TreeemTreeFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` (NUL
 terminated, truncated to `len - 1` bytes). Returns the full message
 length in bytes, excluding the terminator.
 */
size_t treeem_last_error_message(char *buf, size_t len);

/*
 Validates a row-major `dim × dim` matrix and wraps it.
 */
enum TreeemStatus treeem_cov_new(const double *data, size_t dim, struct TreeemCov **out);

void treeem_cov_free(struct TreeemCov *cov);

/*
 Dimension of `cov`, or 0 for a null handle.
 */
size_t treeem_cov_dim(const struct TreeemCov *cov);

/*
 Copies the entries row-major into `out` (at least `dim * dim` values).
 */
enum TreeemStatus treeem_cov_copy(const struct TreeemCov *cov, double *out, size_t len);

/*
 `D(N(0, a) ‖ N(0, b))` in nats.
 */
enum TreeemStatus treeem_kl_gaussian(const struct TreeemCov *a,
                                     const struct TreeemCov *b,
                                     double *out);

enum TreeemStatus treeem_chow_liu(const struct TreeemCov *cov, struct TreeemTreeFit **out);

void treeem_tree_fit_free(struct TreeemTreeFit *fit);

/*
 KL divergence of the fit, or NaN for a null handle.
 */
double treeem_tree_fit_kl(const struct TreeemTreeFit *fit);

size_t treeem_tree_fit_num_edges(const struct TreeemTreeFit *fit);

/*
 Writes edges as `u0, v0, u1, v1, …` with `u < v`, sorted; `len` counts
 `size_t` slots and must be at least `2 * num_edges`.
 */
enum TreeemStatus treeem_tree_fit_edges(const struct TreeemTreeFit *fit, size_t *out, size_t len);

/*
 New handle holding a copy of the tree covariance.
 */
enum TreeemStatus treeem_tree_fit_cov(const struct TreeemTreeFit *fit, struct TreeemCov **out);

/*
 `h` is row-major `m × p`; `noise` has dimension `m`.
 */
enum TreeemStatus treeem_model_new(const double *h,
                                   size_t m,
                                   size_t p,
                                   const struct TreeemCov *noise,
                                   struct TreeemModel **out);

void treeem_model_free(struct TreeemModel *model);

/*
 `samples` is row-major `r × m`, one observation per row.
 */
enum TreeemStatus treeem_obs_new(const double *samples, size_t r, size_t m, struct TreeemObs **out);

/*
 Draws `r` seeded observations from `model` with latent covariance `sigma`.
 */
enum TreeemStatus treeem_obs_sample(const struct TreeemModel *model,
                                    const struct TreeemCov *sigma,
                                    size_t r,
                                    uint64_t seed,
                                    struct TreeemObs **out);

void treeem_obs_free(struct TreeemObs *obs);

size_t treeem_obs_len(const struct TreeemObs *obs);

/*
 Runs EM from `chow_liu(sigma0)`. `truth` may be null; when given, the
 trace records latent KL values.
 */
enum TreeemStatus treeem_run_em(const struct TreeemCov *sigma0,
                                double epsilon,
                                size_t l_max,
                                const struct TreeemModel *model,
                                const struct TreeemObs *obs,
                                const struct TreeemCov *truth,
                                struct TreeemTrace **out);

void treeem_trace_free(struct TreeemTrace *trace);

/*
 Number of iterates in the trace.
 */
size_t treeem_trace_len(const struct TreeemTrace *trace);

/*
 0 = epsilon reached, 1 = iteration cap reached, -1 = null handle.
 */
int treeem_trace_stop_reason(const struct TreeemTrace *trace);

/*
 Observation-space KL of iterate `index` (0-based).
 */
enum TreeemStatus treeem_trace_obs_kl(const struct TreeemTrace *trace, size_t index, double *out);

/*
 Latent KL of iterate `index`; NaN when the run had no ground truth.
 */
enum TreeemStatus treeem_trace_latent_kl(const struct TreeemTrace *trace,
                                         size_t index,
                                         double *out);

/*
 New handle holding the final tree covariance.
 */
enum TreeemStatus treeem_trace_final_cov(const struct TreeemTrace *trace, struct TreeemCov **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TREEEM_H */
