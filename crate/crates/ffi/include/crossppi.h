#ifndef CROSSPPI_H
#define CROSSPPI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CPPI_LABELER_KIND_CONSTANT_MEAN = 0,
  /**
   * `labeler_param` is the ridge strength.
   */
  CPPI_LABELER_KIND_RIDGE = 1,
  /**
   * `labeler_param` is the neighbour count.
   */
  CPPI_LABELER_KIND_KNN = 2,
  /**
   * `labeler_param` is the tree count.
   */
  CPPI_LABELER_KIND_FOREST_LITE = 3,
} CppiLabelerKind;

typedef enum {
  CPPI_STATUS_OK = 0,
  CPPI_STATUS_NULL_POINTER = 1,
  CPPI_STATUS_INVALID_ARGUMENT = 2,
  CPPI_STATUS_INVALID_STATE = 3,
  CPPI_STATUS_NUMERIC = 4,
  CPPI_STATUS_CONFIG = 5,
  CPPI_STATUS_IO = 6,
  CPPI_STATUS_PARSE = 7,
  CPPI_STATUS_BUFFER_TOO_SMALL = 8,
  CPPI_STATUS_PANIC = 9,
} CppiStatus;

typedef enum {
  CPPI_LOSS_MEAN = 0,
  CPPI_LOSS_LINEAR_REGRESSION = 1,
} CppiLoss;

typedef enum {
  CPPI_SCHEME_ERM = 0,
  CPPI_SCHEME_CPPI = 1,
  CPPI_SCHEME_TUNED_CPPI = 2,
} CppiScheme;

/**
 * Labeled data with scalar labels.
 */
typedef struct CppiLabeled CppiLabeled;

/**
 * Aggregated results of one experiment run.
 */
typedef struct CppiResults CppiResults;

typedef struct CppiUnlabeled CppiUnlabeled;

typedef struct {
  uint32_t folds;
  uint32_t bootstrap_runs;
  /**
   * Fixed λ for tuned CPPI; NaN estimates it from the data.
   */
  double lambda;
  CppiLabelerKind labeler;
  double labeler_param;
  uint64_t seed;
} CppiFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *crossppi_version(void);

/**
 * Copy the calling thread's last error message into `buf`. Returns the
 * length the message needs including its NUL, or 0 if there is none.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t crossppi_last_error(char *buf, size_t cap);

CppiFitOptions crossppi_fit_options_default(void);

/**
 * Build a labeled set from `n` row-major inputs of width `dim` and `n`
 * scalar labels.
 *
 * # Safety
 * `x` must hold `n * dim` values, `y` `n` values, and `out` be writable.
 */
CppiStatus crossppi_labeled_new(const double *x,
                                size_t n,
                                size_t dim,
                                const double *y,
                                CppiLabeled **out);

/**
 * # Safety
 * `h` must be null or come from [`crossppi_labeled_new`], freed once.
 */
void crossppi_labeled_free(CppiLabeled *h);

/**
 * # Safety
 * `x` must hold `n * dim` values and `out` be writable.
 */
CppiStatus crossppi_unlabeled_new(const double *x, size_t n, size_t dim, CppiUnlabeled **out);

/**
 * # Safety
 * `h` must be null or come from [`crossppi_unlabeled_new`], freed once.
 */
void crossppi_unlabeled_free(CppiUnlabeled *h);

/**
 * Fit `θ` under `scheme`. `theta_out` receives 1 value for the mean and
 * `dim` values for regression; `lambda_out` (optional) receives the λ used,
 * NaN for ERM. A null `opts` uses [`crossppi_fit_options_default`].
 *
 * # Safety
 * Handles must be live, `theta_out` valid for `theta_cap` values and
 * `lambda_out` null or writable.
 */
CppiStatus crossppi_fit(CppiLoss loss,
                        CppiScheme scheme,
                        const CppiLabeled *labeled,
                        const CppiUnlabeled *unlabeled,
                        const CppiFitOptions *opts,
                        double *theta_out,
                        size_t theta_cap,
                        double *lambda_out);

/**
 * Run an experiment by name (e.g. `"synth-mean"`) with optional flat JSON
 * overrides such as `{"trials": 10, "synth.r2": 0.25}`.
 *
 * # Safety
 * `name` must be a NUL-terminated string, `overrides_json` null or one, and
 * `out` writable.
 */
CppiStatus crossppi_run_experiment(const char *name, const char *overrides_json, CppiResults **out);

/**
 * Copy the results CSV into `buf`. `needed` (optional) receives its length
 * including the NUL; a short buffer yields `BufferTooSmall`.
 *
 * # Safety
 * `res` must be live, `buf` valid for `cap` bytes, `needed` null or writable.
 */
CppiStatus crossppi_results_csv(const CppiResults *res, char *buf, size_t cap, size_t *needed);

/**
 * # Safety
 * `h` must be null or come from [`crossppi_run_experiment`], freed once.
 */
void crossppi_results_free(CppiResults *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROSSPPI_H */
