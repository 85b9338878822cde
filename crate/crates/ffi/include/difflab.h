#ifndef DIFFLAB_H
#define DIFFLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DifflabScheduleKind {
  DIFFLAB_SCHEDULE_KIND_ADAPTIVE = 0,
  DIFFLAB_SCHEDULE_KIND_CONSTANT = 1,
  DIFFLAB_SCHEDULE_KIND_LINEAR = 2,
} DifflabScheduleKind;

/**
 * Status codes returned by every fallible call.
 */
typedef enum DifflabStatus {
  DIFFLAB_STATUS_OK = 0,
  DIFFLAB_STATUS_NULL_POINTER = 1,
  DIFFLAB_STATUS_INVALID_INPUT = 2,
  DIFFLAB_STATUS_DIMENSION_MISMATCH = 3,
  DIFFLAB_STATUS_SCHEDULE = 4,
  DIFFLAB_STATUS_NON_FINITE_SCORE = 5,
  DIFFLAB_STATUS_JSON = 6,
  DIFFLAB_STATUS_UTF8 = 7,
  DIFFLAB_STATUS_PANIC = 8,
  DIFFLAB_STATUS_OTHER = 9,
} DifflabStatus;

/**
 * Opaque mixture handle.
 */
typedef struct DifflabMixture DifflabMixture;

/**
 * Opaque schedule handle.
 */
typedef struct DifflabSchedule DifflabSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *difflab_last_error_message(void);

void difflab_clear_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *difflab_version(void);

/**
 * Parse a mixture from JSON: `{"dim": d, "components": [{"w": .., "mean": [..], "var": ..}]}`.
 */
enum DifflabStatus difflab_mixture_from_json(const char *json, struct DifflabMixture **out);

/**
 * Build a mixture from `k` weights, `k*dim` row-major means and `k` variances.
 */
enum DifflabStatus difflab_mixture_new(size_t dim,
                                       size_t k,
                                       const double *weights,
                                       const double *means,
                                       const double *vars,
                                       struct DifflabMixture **out);

void difflab_mixture_free(struct DifflabMixture *m);

/**
 * Dimension of the mixture, or 0 for a null handle.
 */
size_t difflab_mixture_dim(const struct DifflabMixture *m);

/**
 * Serialize to JSON. Release the string with [`difflab_string_free`].
 */
enum DifflabStatus difflab_mixture_to_json(const struct DifflabMixture *m, char **out);

void difflab_string_free(char *s);

enum DifflabStatus difflab_mixture_log_density(const struct DifflabMixture *m,
                                               const double *x,
                                               size_t dim,
                                               double *out);

/**
 * Score of the mixture after OU smoothing to time `t` (`t = 0` is the
 * mixture itself). Writes `dim` values.
 */
enum DifflabStatus difflab_mixture_score(const struct DifflabMixture *m,
                                         double t,
                                         const double *x,
                                         size_t dim,
                                         double *out);

/**
 * New handle for the time-`t` marginal of the forward process.
 */
enum DifflabStatus difflab_mixture_smooth(const struct DifflabMixture *m,
                                          double t,
                                          struct DifflabMixture **out);

/**
 * Draw `n` points into `out` (`n*dim`, row-major). Same seed, same draws.
 */
enum DifflabStatus difflab_mixture_sample(const struct DifflabMixture *m,
                                          uint64_t seed,
                                          size_t n,
                                          double *out);

enum DifflabStatus difflab_schedule_new(enum DifflabScheduleKind kind,
                                        double horizon,
                                        double gamma,
                                        size_t n,
                                        struct DifflabSchedule **out);

void difflab_schedule_free(struct DifflabSchedule *s);

/**
 * Realized number of steps; the schedule has one more time than steps.
 * Returns 0 for a null handle.
 */
size_t difflab_schedule_len(const struct DifflabSchedule *s);

/**
 * Copy the `len + 1` decreasing times into `out` of capacity `cap`.
 */
enum DifflabStatus difflab_schedule_times(const struct DifflabSchedule *s, double *out, size_t cap);

enum DifflabStatus difflab_schedule_kl_budget(const struct DifflabSchedule *s, double *out);

/**
 * One exact reverse step with frozen score: writes the mean to `mean_out`
 * (`dim` values) and the per-coordinate noise std to `std_out`.
 */
enum DifflabStatus difflab_ddpm_step(const double *x,
                                     const double *s_hat,
                                     size_t dim,
                                     double h,
                                     double *mean_out,
                                     double *std_out);

/**
 * Run the reverse sampler with the mixture's exact scores from `N(0, I)`
 * and write the `n*dim` terminal samples to `out`.
 */
enum DifflabStatus difflab_sample_analytic(const struct DifflabSchedule *s,
                                           const struct DifflabMixture *m,
                                           size_t n,
                                           uint64_t seed,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIFFLAB_H */
