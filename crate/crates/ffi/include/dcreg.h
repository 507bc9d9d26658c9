#ifndef DCREG_H
#define DCREG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every call.
 */
typedef enum DcregStatus {
  DCREG_STATUS_OK = 0,
  DCREG_STATUS_NULL_POINTER = 1,
  DCREG_STATUS_INVALID_ARGUMENT = 2,
  DCREG_STATUS_INVALID_DATA = 3,
  DCREG_STATUS_IO = 4,
  DCREG_STATUS_NOT_CONVERGED = 5,
  DCREG_STATUS_SINGULAR = 6,
  DCREG_STATUS_UNFITTED_MODEL = 7,
  DCREG_STATUS_UNAVAILABLE = 8,
  DCREG_STATUS_PANIC = 99,
} DcregStatus;

/**
 * Estimating function used by [`dcreg_fit`].
 */
typedef enum DcregApproach {
  DCREG_APPROACH_IM = 0,
  DCREG_APPROACH_A = 1,
  DCREG_APPROACH_B = 2,
} DcregApproach;

/**
 * Fitted censoring distribution `G`.
 */
typedef struct DcregCensoringModel DcregCensoringModel;

/**
 * Validated dataset.
 */
typedef struct DcregDataset DcregDataset;

/**
 * Coefficient estimate at one analysis age.
 */
typedef struct DcregFit DcregFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *dcreg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dcreg_version(void);

/**
 * Reads a dataset from a CSV file with columns `u, delta, v`, optional
 * `c`, and covariates.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DcregStatus dcreg_dataset_from_csv(const char *path, struct DcregDataset **out);

/**
 * Builds a dataset from column arrays. `z` is row-major `n x p`; `c` may be
 * null when censoring ages are unknown.
 *
 * # Safety
 * `u`, `delta`, `v` must hold `n` values, `z` must hold `n * p` values, and
 * `c` must be null or hold `n` values.
 */
enum DcregStatus dcreg_dataset_from_arrays(size_t n,
                                           size_t p,
                                           const double *u,
                                           const double *delta,
                                           const double *v,
                                           const double *z,
                                           const double *c,
                                           struct DcregDataset **out);

/**
 * Number of subjects, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t dcreg_dataset_n(const struct DcregDataset *ds);

/**
 * Number of covariates, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t dcreg_dataset_p(const struct DcregDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void dcreg_dataset_free(struct DcregDataset *ds);

/**
 * Fits a censoring model described by a JSON spec, e.g.
 * `{"method":"cox"}` or `{"method":"forest","n_trees":100,"min_node_size":200}`.
 *
 * # Safety
 * `ds` must be a live dataset handle, `spec_json` a NUL-terminated string
 * and `out` a valid pointer.
 */
enum DcregStatus dcreg_censoring_fit(const struct DcregDataset *ds,
                                     const char *spec_json,
                                     struct DcregCensoringModel **out);

/**
 * `G(t | z, v)`. `subject` is the training index for out-of-bag forest
 * predictions, or negative for a new subject.
 *
 * # Safety
 * `z` must hold `p` values and `out` must be valid. A null `model` yields
 * `UnfittedModel`.
 */
enum DcregStatus dcreg_censoring_survival(const struct DcregCensoringModel *model,
                                          double t,
                                          const double *z,
                                          size_t p,
                                          double v,
                                          int64_t subject,
                                          double *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void dcreg_censoring_free(struct DcregCensoringModel *model);

/**
 * Solves the estimating equation at `t0`. With `sandwich` non-zero the
 * sandwich covariance is attached. A fit that does not converge returns
 * `NotConverged` and no handle.
 *
 * # Safety
 * `ds` and `model` must be live handles and `out` a valid pointer.
 */
enum DcregStatus dcreg_fit(const struct DcregDataset *ds,
                           const struct DcregCensoringModel *model,
                           enum DcregApproach approach,
                           double t0,
                           bool sandwich,
                           struct DcregFit **out);

/**
 * Number of coefficients (`1 + p`), or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t dcreg_fit_dim(const struct DcregFit *fit);

/**
 * Newton iterations used, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live fit handle.
 */
size_t dcreg_fit_iterations(const struct DcregFit *fit);

/**
 * Copies `(alpha, beta...)` into `out`, which must hold `len >= dim` values.
 *
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` values.
 */
enum DcregStatus dcreg_fit_coefficients(const struct DcregFit *fit, double *out, size_t len);

/**
 * Copies the row-major covariance matrix into `out` (`len >= dim * dim`).
 * Returns `Unavailable` when the fit was made without a sandwich.
 *
 * # Safety
 * `fit` must be a live handle and `out` must hold `len` values.
 */
enum DcregStatus dcreg_fit_covariance(const struct DcregFit *fit, double *out, size_t len);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void dcreg_fit_free(struct DcregFit *fit);

/**
 * LOESS smooth of `y` over ascending ages `t`, written to `out` (`m`
 * values).
 *
 * # Safety
 * `t`, `y` and `out` must each hold `m` values.
 */
enum DcregStatus dcreg_loess(const double *t,
                             const double *y,
                             size_t m,
                             double span,
                             size_t degree,
                             double *out);

/**
 * `expit(alpha + beta'z)` for coefficients `(alpha, beta...)` of length
 * `p + 1`.
 *
 * # Safety
 * `coef` must hold `p + 1` values, `z` must hold `p` values, `out` valid.
 */
enum DcregStatus dcreg_logistic_prob(const double *coef, const double *z, size_t p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCREG_H */
