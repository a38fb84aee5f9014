#ifndef TWOGROUPS_H
#define TWOGROUPS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum TgStatus {
  TG_STATUS_OK = 0,
  TG_STATUS_INVALID_INPUT = 1,
  TG_STATUS_DEGENERATE_POINT = 2,
  TG_STATUS_INSUFFICIENT_DATA = 3,
  TG_STATUS_EMPIRICAL_NULL_FAILURE = 4,
  TG_STATUS_NUMERICAL = 5,
  TG_STATUS_PARSE = 6,
  TG_STATUS_IO = 7,
  TG_STATUS_NULL_POINTER = 8,
  TG_STATUS_PANIC = 9,
} TgStatus;

typedef enum TgTail {
  TG_TAIL_LOWER = 0,
  TG_TAIL_UPPER = 1,
  TG_TAIL_TWO_SIDED = 2,
} TgTail;

/**
 * Opaque model handle.
 */
typedef struct TgModel TgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Model with a theoretical null and g = N(mean, variance).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum TgStatus tg_model_new_normal(double p0,
                                  double mean,
                                  double variance,
                                  double sampling_variance,
                                  struct TgModel **out);

/**
 * Model with a theoretical null and g on `len` support points.
 *
 * # Safety
 * `support` and `weights` must each point to `len` readable doubles and
 * `out` to writable storage for one handle.
 */
enum TgStatus tg_model_new_grid(double p0,
                                const double *support,
                                const double *weights,
                                size_t len,
                                double sampling_variance,
                                struct TgModel **out);

/**
 * Copy of `model` with the null replaced by N(delta0, sigma0² V).
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TgStatus tg_model_with_empirical_null(const struct TgModel *model,
                                           double delta0,
                                           double sigma0,
                                           struct TgModel **out);

/**
 * Parses a model from `key = value` configuration text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum TgStatus tg_model_from_config(const char *text, struct TgModel **out);

/**
 * Serializes a model to configuration text. Free the result with
 * `tg_string_free`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TgStatus tg_model_to_config(const struct TgModel *model, char **out);

/**
 * # Safety
 * `s` must come from this library (or be null) and not be freed twice.
 */
void tg_string_free(char *s);

/**
 * # Safety
 * `model` must come from this library (or be null) and not be freed twice.
 */
void tg_model_free(struct TgModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TgStatus tg_model_p0(const struct TgModel *model, double *out);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TgStatus tg_local_fdr(const struct TgModel *model,
                           double z,
                           double sampling_variance,
                           double *out);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TgStatus tg_tail_fdr(const struct TgModel *model,
                          double z,
                          double sampling_variance,
                          enum TgTail tail,
                          double *out);

/**
 * P(μ > k | z) for the upper side, P(μ < −k | z) for the lower side and
 * P(|μ| > k | z) for two-sided.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TgStatus tg_exceedance(const struct TgModel *model,
                            double z,
                            double sampling_variance,
                            double k,
                            enum TgTail side,
                            double *out);

/**
 * Mean exceedance over the population of units beyond `threshold`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TgStatus tg_population_averaged_exceedance(const struct TgModel *model,
                                                double threshold,
                                                double k,
                                                double sampling_variance,
                                                enum TgTail tail,
                                                double *out);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TgStatus tg_marginal_density(const struct TgModel *model,
                                  double z,
                                  double sampling_variance,
                                  double *out);

/**
 * P(Z ≥ z) under the mixture.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TgStatus tg_marginal_upper_tail(const struct TgModel *model,
                                     double z,
                                     double sampling_variance,
                                     double *out);

/**
 * Fits p0 and g = N(m, v) by EM with a theoretical null. `variances` may
 * be null, in which case every unit uses `sampling_variance`.
 *
 * # Safety
 * `z` (and `variances` when non-null) must point to `n` readable doubles
 * and `out` to writable storage for one handle.
 */
enum TgStatus tg_fit_parametric(const double *z,
                                const double *variances,
                                size_t n,
                                double sampling_variance,
                                struct TgModel **out);

/**
 * Message for the most recent failure on this thread ("" after success).
 * The pointer stays valid until the next library call on this thread.
 */
const char *tg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWOGROUPS_H */
