#ifndef LSHATTN_H
#define LSHATTN_H

/* This file is generated by cbindgen from lshattn-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum {
  LshattnStatus_Ok = 0,
  LshattnStatus_NullPointer = 1,
  LshattnStatus_InvalidInput = 2,
  LshattnStatus_DimensionMismatch = 3,
  LshattnStatus_IoError = 4,
  LshattnStatus_BufferTooSmall = 5,
} LshattnStatus;

/**
 * Opaque point-cloud handle.
 */
typedef struct LshattnCloud LshattnCloud;

/**
 * Opaque random-feature-map handle.
 */
typedef struct LshattnRffMap LshattnRffMap;

/**
 * Opaque directed k-NN support handle.
 */
typedef struct LshattnSupport LshattnSupport;

/**
 * Measured error and exact cost of one approximation run.
 */
typedef struct {
  /**
   * Mean squared error over ordered pairs.
   */
  double epsilon;
  /**
   * Exact FLOP count under the analysis cost model.
   */
  uint64_t flops;
  /**
   * Collided pairs across tables (0 for RFF runs).
   */
  uint64_t collisions;
} LshattnApproxResult;

/**
 * Block-diagonal LSH attention configuration.
 */
typedef struct {
  uintptr_t tables;
  uintptr_t coord_hashes;
  uintptr_t qk_aux_hashes;
  double bucket_total;
  uintptr_t block_size;
  uint64_t seed;
} LshattnBlockAttnConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *lshattn_status_message(LshattnStatus status);

/**
 * Library version as a static string.
 */
const char *lshattn_version(void);

/**
 * `n` points uniform in `[0, side]^2`. Returns NULL on failure and writes
 * the reason to `status` when given.
 *
 * # Safety
 * `status` must be NULL or writable.
 */
LshattnCloud *lshattn_cloud_uniform_square(uintptr_t n,
                                           double side,
                                           uint64_t seed,
                                           LshattnStatus *status);

/**
 * `n` points uniform in the unit `dim`-ball.
 *
 * # Safety
 * `status` must be NULL or writable.
 */
LshattnCloud *lshattn_cloud_uniform_ball(uintptr_t n,
                                         uintptr_t dim,
                                         uint64_t seed,
                                         LshattnStatus *status);

/**
 * Build a cloud from a row-major `n x dim` coordinate buffer.
 *
 * # Safety
 * `coords` must point to at least `n * dim` readable doubles.
 */
LshattnCloud *lshattn_cloud_from_coords(const double *coords,
                                        uintptr_t n,
                                        uintptr_t dim,
                                        LshattnStatus *status);

/**
 * # Safety
 * `cloud` must be NULL or a pointer from a `lshattn_cloud_*` constructor,
 * not yet freed.
 */
void lshattn_cloud_free(LshattnCloud *cloud);

/**
 * # Safety
 * `cloud` must be a valid handle.
 */
uintptr_t lshattn_cloud_len(const LshattnCloud *cloud);

/**
 * # Safety
 * `cloud` must be a valid handle.
 */
uintptr_t lshattn_cloud_dim(const LshattnCloud *cloud);

/**
 * Copy coordinates row-major into `out` (capacity `out_len >= n * dim`).
 *
 * # Safety
 * `cloud` must be a valid handle and `out` writable for `out_len` doubles.
 */
LshattnStatus lshattn_cloud_coords(const LshattnCloud *cloud, double *out, uintptr_t out_len);

/**
 * Directed k-nearest-neighbor support of a cloud.
 *
 * # Safety
 * `cloud` must be a valid handle.
 */
LshattnSupport *lshattn_knn_support(const LshattnCloud *cloud, uintptr_t k, LshattnStatus *status);

/**
 * # Safety
 * `support` must be NULL or an unfreed handle from `lshattn_knn_support`.
 */
void lshattn_support_free(LshattnSupport *support);

/**
 * Number of ordered pairs in the support.
 *
 * # Safety
 * `support` must be a valid handle.
 */
uintptr_t lshattn_support_len(const LshattnSupport *support);

/**
 * Copy ordered pairs as interleaved `(src, dst)` u32 values
 * (capacity `out_len >= 2 * len`).
 *
 * # Safety
 * `support` must be a valid handle and `out` writable for `out_len` values.
 */
LshattnStatus lshattn_support_pairs(const LshattnSupport *support,
                                    uint32_t *out,
                                    uintptr_t out_len);

/**
 * `exp(-z^2/2)`; NaN on invalid input.
 *
 * # Safety
 * `status` must be NULL or writable.
 */
double lshattn_gaussian_eval(double z, LshattnStatus *status);

/**
 * Exact Euclidean-LSH collision probability at distance `z`, bucket width
 * `r`; NaN on invalid input.
 *
 * # Safety
 * `status` must be NULL or writable.
 */
double lshattn_collision_prob(double z, double r, LshattnStatus *status);

/**
 * Piecewise bounds on the collision probability.
 *
 * # Safety
 * `lower` and `upper` must be writable.
 */
LshattnStatus lshattn_collision_prob_bounds(double z, double r, double *lower, double *upper);

/**
 * Analytic per-pair MSE of the RFF estimator; NaN on invalid input.
 *
 * # Safety
 * `status` must be NULL or writable.
 */
double lshattn_rff_mse_expected(double z, uintptr_t n_features, LshattnStatus *status);

/**
 * Seeded feature map with `n_features` (even) output dimensions.
 *
 * # Safety
 * `status` must be NULL or writable.
 */
LshattnRffMap *lshattn_rff_new(uintptr_t dim,
                               uintptr_t n_features,
                               uint64_t seed,
                               LshattnStatus *status);

/**
 * # Safety
 * `map` must be NULL or an unfreed handle from `lshattn_rff_new`.
 */
void lshattn_rff_free(LshattnRffMap *map);

/**
 * Feature vector of `x` (length `dim`) into `out` (capacity `n_features`).
 *
 * # Safety
 * `map` must be a valid handle; `x` readable for `dim` doubles; `out`
 * writable for `out_len` doubles.
 */
LshattnStatus lshattn_rff_features(const LshattnRffMap *map,
                                   const double *x,
                                   uintptr_t dim,
                                   double *out,
                                   uintptr_t out_len);

/**
 * One OR & AND LSH approximation run against the truncated kernel over the
 * given support (`fns_per_table = 1` is OR-only).
 *
 * # Safety
 * `cloud` and `support` must be valid handles over the same cloud; `out`
 * must be writable.
 */
LshattnStatus lshattn_lsh_approx(const LshattnCloud *cloud,
                                 const LshattnSupport *support,
                                 uintptr_t tables,
                                 uintptr_t fns_per_table,
                                 double r,
                                 uint64_t seed,
                                 LshattnApproxResult *out);

/**
 * One RFF approximation run against the truncated kernel.
 *
 * # Safety
 * As for [`lshattn_lsh_approx`].
 */
LshattnStatus lshattn_rff_approx(const LshattnCloud *cloud,
                                 const LshattnSupport *support,
                                 uintptr_t n_features,
                                 uint64_t seed,
                                 LshattnApproxResult *out);

/**
 * Exact full attention `E = D^{-1} A V`; writes the `n x v_dim` embedding
 * matrix row-major into `out`.
 *
 * # Safety
 * `q`, `k` must be readable for `n * qk_dim` doubles, `v` for `n * v_dim`;
 * `out` writable for `n * v_dim`.
 */
LshattnStatus lshattn_dense_attention(const double *q,
                                      const double *k,
                                      const double *v,
                                      uintptr_t n,
                                      uintptr_t qk_dim,
                                      uintptr_t v_dim,
                                      double *out);

/**
 * Block-diagonal LSH attention; writes the `n x v_dim` embedding matrix
 * row-major into `out` and, when `flagged` is non-NULL, the number of
 * zero-denominator rows.
 *
 * # Safety
 * `q`, `k` readable for `n * qk_dim` doubles, `v` for `n * v_dim`, `coords`
 * for `n * coord_dim`; `out` writable for `n * v_dim`.
 */
LshattnStatus lshattn_block_attention(const double *q,
                                      const double *k,
                                      const double *v,
                                      const double *coords,
                                      uintptr_t n,
                                      uintptr_t qk_dim,
                                      uintptr_t v_dim,
                                      uintptr_t coord_dim,
                                      const LshattnBlockAttnConfig *cfg,
                                      double *out,
                                      uint64_t *flagged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LSHATTN_H */
