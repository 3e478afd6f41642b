#ifndef CMOKG_H
#define CMOKG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmokgStatus {
  CMOKG_STATUS_OK = 0,
  CMOKG_STATUS_NULL_POINTER = 1,
  CMOKG_STATUS_INVALID_ARGUMENT = 2,
  CMOKG_STATUS_DIMENSION_MISMATCH = 3,
  CMOKG_STATUS_NUMERICAL = 4,
  CMOKG_STATUS_IO = 5,
  CMOKG_STATUS_PANIC = 6,
} CmokgStatus;

/**
 * A multi-output GP posterior.
 */
typedef struct CmokgPosterior CmokgPosterior;

/**
 * A synthetic benchmark problem.
 */
typedef struct CmokgProblem CmokgProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cmokg_version(void);

/**
 * Message of the last failure on this thread, or an empty string. The
 * pointer stays valid until the next failing call on this thread.
 */
const char *cmokg_last_error_message(void);

/**
 * Generates a problem of `family` (1 or 2) from `seed`.
 */
enum CmokgStatus cmokg_problem_generate(uint8_t family, uint64_t seed, struct CmokgProblem **out);

/**
 * Loads a problem archive written by `cmokg_problem_save` or the CLI.
 */
enum CmokgStatus cmokg_problem_load(const char *path, struct CmokgProblem **out);

enum CmokgStatus cmokg_problem_save(const struct CmokgProblem *problem, const char *path);

enum CmokgStatus cmokg_problem_dim(const struct CmokgProblem *problem, size_t *out);

enum CmokgStatus cmokg_problem_num_objectives(const struct CmokgProblem *problem, size_t *out);

/**
 * Noise-free objective values at `x`; `out` holds `out_len` values.
 */
enum CmokgStatus cmokg_problem_true_values(const struct CmokgProblem *problem,
                                           const double *x,
                                           size_t x_len,
                                           double *out,
                                           size_t out_len);

/**
 * One noisy evaluation of objective `objective`; the noise draw is a
 * function of `rng_seed` only.
 */
enum CmokgStatus cmokg_problem_evaluate(const struct CmokgProblem *problem,
                                        const double *x,
                                        size_t x_len,
                                        size_t objective,
                                        uint64_t rng_seed,
                                        double *out);

void cmokg_problem_free(struct CmokgProblem *problem);

/**
 * A GP prior over `[0,1]^dim` with one Matern-5/2 kernel per objective.
 * Each array holds `num_objectives` entries.
 */
enum CmokgStatus cmokg_posterior_new(size_t dim,
                                     size_t num_objectives,
                                     const double *length_scale,
                                     const double *output_scale,
                                     const double *constant_mean,
                                     const double *noise_variance,
                                     struct CmokgPosterior **out);

/**
 * Adds `count` observations in place. `locations` is `count x dim`.
 * On failure the posterior is unchanged.
 */
enum CmokgStatus cmokg_posterior_condition(struct CmokgPosterior *posterior,
                                           const double *locations,
                                           const size_t *objectives,
                                           const double *values,
                                           size_t count);

/**
 * Posterior mean of `objective` at `x`.
 */
enum CmokgStatus cmokg_posterior_mean(const struct CmokgPosterior *posterior,
                                      size_t objective,
                                      const double *x,
                                      size_t x_len,
                                      double *out);

/**
 * Posterior variance of `objective` at `x`.
 */
enum CmokgStatus cmokg_posterior_variance(const struct CmokgPosterior *posterior,
                                          size_t objective,
                                          const double *x,
                                          size_t x_len,
                                          double *out);

/**
 * Cost-weighted knowledge gradient of observing `objective` at `x` for
 * weight `lambda`, maximizing over the `grid_count x dim` grid.
 */
enum CmokgStatus cmokg_posterior_cmokg(const struct CmokgPosterior *posterior,
                                       const double *x,
                                       size_t x_len,
                                       size_t objective,
                                       const double *lambda,
                                       size_t lambda_len,
                                       const double *grid,
                                       size_t grid_count,
                                       const double *costs,
                                       size_t costs_len,
                                       double *out);

void cmokg_posterior_free(struct CmokgPosterior *posterior);

/**
 * `E[max_j (a_j + b_j Z)]` for standard normal `Z` over `count` lines.
 */
enum CmokgStatus cmokg_expected_max_affine(const double *a,
                                           const double *b,
                                           size_t count,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMOKG_H */
