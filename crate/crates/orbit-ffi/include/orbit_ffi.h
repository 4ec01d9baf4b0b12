#ifndef ORBIT_FFI_H
#define ORBIT_FFI_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum OrbitStatus {
  ORBIT_STATUS_OK = 0,
  ORBIT_STATUS_NULL_POINTER = 1,
  ORBIT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * outside the hypotheses of the dimension formulas
   */
  ORBIT_STATUS_HYPOTHESIS = 3,
  ORBIT_STATUS_NO_GAP = 4,
  ORBIT_STATUS_SEARCH_EXHAUSTED = 5,
  ORBIT_STATUS_NUMERICAL = 6,
  ORBIT_STATUS_PANIC = 7,
} OrbitStatus;

/**
 * Opaque model handle.
 */
typedef struct OrbitModel OrbitModel;

/**
 * Opaque quadrature-rule handle.
 */
typedef struct OrbitQuadrature OrbitQuadrature;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *orbit_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *orbit_version(void);

/**
 * Build a model. `kind` is one of `mra`, `mra-projected`, `sphere`, `cryo`,
 * `cryo-projected`, `procrustes`. `radial` may be null when `n_radial` is 0.
 *
 * # Safety
 * `kind` must be a valid C string, `radial` must hold `n_radial` entries and
 * `out` must be writable.
 */
enum OrbitStatus orbit_model_new(const char *kind,
                                 size_t bandlimit,
                                 const size_t *radial,
                                 size_t n_radial,
                                 size_t atoms,
                                 struct OrbitModel **out);

/**
 * # Safety
 * `model` must come from [`orbit_model_new`] and not be freed twice. Null is
 * ignored.
 */
void orbit_model_free(struct OrbitModel *model);

/**
 * Real dimension of the signal, 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t orbit_model_dim(const struct OrbitModel *model);

/**
 * `n` equispaced SO(2) nodes.
 *
 * # Safety
 * `out` must be writable.
 */
enum OrbitStatus orbit_quadrature_so2(size_t n, struct OrbitQuadrature **out);

/**
 * Product rule on SO(3).
 *
 * # Safety
 * `out` must be writable.
 */
enum OrbitStatus orbit_quadrature_so3(size_t n_alpha,
                                      size_t n_beta,
                                      size_t n_gamma,
                                      struct OrbitQuadrature **out);

/**
 * Product rule on O(3): the SO(3) rule and its reflection.
 *
 * # Safety
 * `out` must be writable.
 */
enum OrbitStatus orbit_quadrature_o3(size_t n_alpha,
                                     size_t n_beta,
                                     size_t n_gamma,
                                     struct OrbitQuadrature **out);

/**
 * Number of nodes, 0 for a null handle.
 *
 * # Safety
 * `rule` must be null or a live handle.
 */
size_t orbit_quadrature_len(const struct OrbitQuadrature *rule);

/**
 * # Safety
 * `rule` must come from an `orbit_quadrature_*` constructor. Null is ignored.
 */
void orbit_quadrature_free(struct OrbitQuadrature *rule);

/**
 * Closed-form series term `s_k(theta)` against `theta_star`. Both vectors
 * have length `len`, which must equal the model dimension. `grad` may be
 * null; otherwise it receives `len` entries.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum OrbitStatus orbit_s_closed(const struct OrbitModel *model,
                                const double *theta,
                                const double *theta_star,
                                size_t len,
                                size_t k,
                                double *value,
                                double *grad);

/**
 * `s_k` by quadrature over `rule`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum OrbitStatus orbit_s_oracle(const struct OrbitModel *model,
                                const struct OrbitQuadrature *rule,
                                const double *theta,
                                const double *theta_star,
                                size_t len,
                                size_t k,
                                double *value);

/**
 * Certified cumulative ranks for moment orders 1..3 at a generic point drawn
 * from `seed`. `predicted` may be null; when given it receives the predicted
 * ladder, or zeros if the model has no closed-form prediction. Returns
 * `Hypothesis` when the model lies outside the prediction's hypotheses or
 * the prediction disagrees, and `NoGap` when no
 * clean singular-value gap was found.
 *
 * # Safety
 * `ranks` must hold 3 entries; `predicted` null or 3 entries.
 */
enum OrbitStatus orbit_trdeg_ladder(const struct OrbitModel *model,
                                    uint64_t seed,
                                    double rel_tol,
                                    double min_gap,
                                    size_t *ranks,
                                    size_t *predicted);

/**
 * Clebsch-Gordan coefficient `<l m; l' m' | l'' m''>`; 0 outside the domain.
 */
double orbit_clebsch_gordan(int64_t l, int64_t lp, int64_t lpp, int64_t m, int64_t mp, int64_t mpp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORBIT_FFI_H */
