#ifndef WAGAN_H
#define WAGAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum WaganStatus {
  WAGAN_STATUS_OK = 0,
  WAGAN_STATUS_NULL_POINTER = 1,
  WAGAN_STATUS_INVALID_ARGUMENT = 2,
  WAGAN_STATUS_IO = 3,
  WAGAN_STATUS_PARSE = 4,
  WAGAN_STATUS_NUMERICAL = 5,
  WAGAN_STATUS_CHECKPOINT = 6,
  WAGAN_STATUS_PANIC = 7,
} WaganStatus;

/**
 * Per-margin thresholds and GPD fits of a data set.
 */
typedef struct WaganFits WaganFits;

/**
 * Row-major matrix of doubles.
 */
typedef struct WaganMatrix WaganMatrix;

/**
 * A trained checkpoint.
 */
typedef struct WaganModel WaganModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *wagan_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wagan_version(void);

/**
 * Copies `rows * cols` row-major doubles into a new matrix.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles; `out` must be writable.
 */
enum WaganStatus wagan_matrix_new(size_t rows,
                                  size_t cols,
                                  const double *data,
                                  struct WaganMatrix **out);

/**
 * Reads a numeric CSV with a header row.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum WaganStatus wagan_matrix_read_csv(const char *path, struct WaganMatrix **out);

/**
 * # Safety
 * `m` must be a live matrix handle and `path` a NUL-terminated string.
 */
enum WaganStatus wagan_matrix_write_csv(const struct WaganMatrix *m, const char *path);

/**
 * # Safety
 * `m` must be null or a live matrix handle.
 */
size_t wagan_matrix_rows(const struct WaganMatrix *m);

/**
 * # Safety
 * `m` must be null or a live matrix handle.
 */
size_t wagan_matrix_cols(const struct WaganMatrix *m);

/**
 * Row-major contents, valid while the handle lives. Null for a null handle.
 *
 * # Safety
 * `m` must be null or a live matrix handle.
 */
const double *wagan_matrix_data(const struct WaganMatrix *m);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void wagan_matrix_free(struct WaganMatrix *m);

/**
 * Logistic-dependence sample with Pareto(`alpha`) margins.
 *
 * # Safety
 * `out` must be writable.
 */
enum WaganStatus wagan_simulate_logistic(size_t d,
                                         double theta,
                                         double alpha,
                                         size_t n,
                                         uint64_t seed,
                                         struct WaganMatrix **out);

/**
 * Fits every margin above its `k2`-th largest order statistic.
 *
 * # Safety
 * `data` must be a live matrix handle; `out` must be writable.
 */
enum WaganStatus wagan_fits_new(const struct WaganMatrix *data, size_t k2, struct WaganFits **out);

/**
 * # Safety
 * `f` must be null or a live fits handle.
 */
size_t wagan_fits_dim(const struct WaganFits *f);

/**
 * Threshold and GPD parameters of margin `j` (0-based).
 *
 * # Safety
 * `f` must be a live fits handle; the output pointers must be writable.
 */
enum WaganStatus wagan_fits_get(const struct WaganFits *f,
                                size_t j,
                                double *threshold,
                                double *sigma,
                                double *xi);

/**
 * # Safety
 * `f` must be null or a handle not yet freed.
 */
void wagan_fits_free(struct WaganFits *f);

/**
 * Loads a checkpoint written by `wagan train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum WaganStatus wagan_model_load(const char *path, struct WaganModel **out);

/**
 * # Safety
 * `m` must be null or a live model handle.
 */
size_t wagan_model_dim(const struct WaganModel *m);

/**
 * # Safety
 * `m` must be null or a live model handle.
 */
size_t wagan_model_k1(const struct WaganModel *m);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void wagan_model_free(struct WaganModel *m);

/**
 * `count` generated angles, one simplex point per row.
 *
 * # Safety
 * `m` must be a live model handle; `out` must be writable.
 */
enum WaganStatus wagan_sample_angles(const struct WaganModel *m,
                                     size_t count,
                                     uint64_t seed,
                                     struct WaganMatrix **out);

/**
 * `n_star` tail rows on the data scale, each above at least one threshold.
 *
 * # Safety
 * `m` and `f` must be live handles; `out` must be writable.
 */
enum WaganStatus wagan_sample_tail(const struct WaganModel *m,
                                   const struct WaganFits *f,
                                   size_t n_star,
                                   uint64_t seed,
                                   struct WaganMatrix **out);

/**
 * Exact 2-Wasserstein distance between two uniformly weighted samples.
 *
 * # Safety
 * `a` and `b` must be live matrix handles; `out` must be writable.
 */
enum WaganStatus wagan_w2_distance(const struct WaganMatrix *a,
                                   const struct WaganMatrix *b,
                                   double *out);

/**
 * Mean relative extremal-coefficient error over subsets of size 2 and 3.
 * Rows of both matrices must be points of the simplex.
 *
 * # Safety
 * `generated` and `test` must be live matrix handles; `out` must be writable.
 */
enum WaganStatus wagan_dependence_score(const struct WaganMatrix *generated,
                                        const struct WaganMatrix *test,
                                        size_t subset_cap,
                                        uint64_t seed,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAGAN_H */
