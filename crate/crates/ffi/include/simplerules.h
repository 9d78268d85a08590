/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef SIMPLERULES_H
#define SIMPLERULES_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_NULL_POINTER = 1,
  SR_STATUS_INVALID_ARGUMENT = 2,
  SR_STATUS_DATA = 3,
  SR_STATUS_NUMERICAL = 4,
  SR_STATUS_IO = 5,
  SR_STATUS_PANIC = 6,
} SrStatus;

// A loaded table of features and binary labels.
typedef struct SrDataset SrDataset;

// An integer-weight scorecard, optionally with a release threshold.
typedef struct SrScorecard SrScorecard;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy of the calling thread's last error message, or null when the last
// call succeeded. Free with `sr_string_free`.
char *sr_last_error_message(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void sr_string_free(char *s);

// Loads a comma-separated file whose column `label` holds the binary
// outcome; every other column is a numeric feature.
//
// # Safety
// `path` and `label` must be NUL-terminated; `out` must be writable.
enum SrStatus sr_dataset_load_csv(const char *path, const char *label, struct SrDataset **out);

// # Safety
// `ds` must be null or a handle from `sr_dataset_load_csv`.
void sr_dataset_free(struct SrDataset *ds);

// Row and feature counts.
//
// # Safety
// `ds` must be a live handle; `rows` and `features` must be writable.
enum SrStatus sr_dataset_shape(const struct SrDataset *ds, size_t *rows, size_t *features);

// Name of feature `index`. Free the result with `sr_string_free`.
//
// # Safety
// `ds` must be a live handle; `out` must be writable.
enum SrStatus sr_dataset_feature_name(const struct SrDataset *ds, size_t index, char **out);

// Select-regress-round with at most `k` features and weights in
// `[-m, m]`; the lasso penalty is chosen by `folds`-fold stratified
// cross-validation seeded by `seed`.
//
// # Safety
// `ds` must be a live handle; `out` must be writable.
enum SrStatus sr_scorecard_build(const struct SrDataset *ds,
                                 size_t k,
                                 uint32_t m,
                                 size_t folds,
                                 uint64_t seed,
                                 struct SrScorecard **out);

// # Safety
// `card` must be null or a scorecard handle from this library.
void sr_scorecard_free(struct SrScorecard *card);

// Sets the release threshold: release iff score < `threshold`.
//
// # Safety
// `card` must be a live handle.
enum SrStatus sr_scorecard_set_threshold(struct SrScorecard *card, double threshold);

// # Safety
// `json` must be NUL-terminated; `out` must be writable.
enum SrStatus sr_scorecard_from_json(const char *json, struct SrScorecard **out);

// JSON form of the card. Free the result with `sr_string_free`.
//
// # Safety
// `card` must be a live handle; `out` must be writable.
enum SrStatus sr_scorecard_to_json(const struct SrScorecard *card, char **out);

// Score of one row given as `len` parallel (name, value) entries. Every
// scorecard feature must appear among the names.
//
// # Safety
// `names` and `values` must each point to `len` elements.
enum SrStatus sr_scorecard_score_row(const struct SrScorecard *card,
                                     const char *const *names,
                                     const double *values,
                                     size_t len,
                                     double *out);

// Writes 1 (release) or 0 (withhold). The card needs a threshold.
//
// # Safety
// As for `sr_scorecard_score_row`.
enum SrStatus sr_scorecard_decide(const struct SrScorecard *card,
                                  const char *const *names,
                                  const double *values,
                                  size_t len,
                                  int32_t *release);

// Area under the ROC curve of `scores` against 0/1 `labels`, ties
// counted half.
//
// # Safety
// `scores` and `labels` must each point to `n` elements.
enum SrStatus sr_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

// AUC after adding Gaussian noise with variance ratio `gamma` to
// binormal scores whose noiseless AUC is `auc_y`.
//
// # Safety
// `out` must be writable.
enum SrStatus sr_auc_under_noise(double auc_y, double gamma, double *out);

// Release intercept `gamma` such that the release probability averaged
// over the hidden covariate equals `q`.
//
// # Safety
// `out` must be writable.
enum SrStatus sr_solve_gamma(double p_u, double alpha, double q, double *out);

// Sensitivity-adjusted adverse-outcome probability under the action not
// taken. `observed_release` is nonzero when the case was released and
// `q` is its estimated release probability.
//
// # Safety
// `out` must be writable.
enum SrStatus sr_rr_counterfactual(double rhat_release,
                                   double rhat_withhold,
                                   double p_u,
                                   double alpha,
                                   double delta_release,
                                   double delta_withhold,
                                   int32_t observed_release,
                                   double q,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIMPLERULES_H */
