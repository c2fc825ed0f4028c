#ifndef LYAPDIM_H
#define LYAPDIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LyapdimStatus {
  LYAPDIM_STATUS_OK = 0,
  LYAPDIM_STATUS_INVALID_INPUT = 1,
  LYAPDIM_STATUS_DIMENSION_MISMATCH = 2,
  LYAPDIM_STATUS_DEGENERATE_METRIC = 3,
  LYAPDIM_STATUS_DOMAIN_VIOLATION = 4,
  LYAPDIM_STATUS_BLOWUP = 5,
  LYAPDIM_STATUS_NON_CONVERGENCE = 6,
  LYAPDIM_STATUS_NEEDS_MORE_ROOTS = 7,
  LYAPDIM_STATUS_IO = 8,
  LYAPDIM_STATUS_NULL_POINTER = 9,
  LYAPDIM_STATUS_BUFFER_TOO_SMALL = 10,
  LYAPDIM_STATUS_PANIC = 11,
} LyapdimStatus;

/**
 * Opaque set of characteristic roots.
 */
typedef struct LyapdimRootSet LyapdimRootSet;

/**
 * Result record of the bound functions.
 */
typedef struct LyapdimBound {
  double d_star;
  size_t m;
  double gamma;
  double p_star;
  double kappa_opt;
  /**
   * NaN when no rescaling was applied.
   */
  double scale_opt;
  double slope;
} LyapdimBound;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on this thread.
 */
const char *lyapdim_last_error(void);

/**
 * Root `p ≥ −1` of `p e^{p+1} = c`.
 *
 * # Safety
 * `out` must be null or point to writable storage for one `double`.
 */
enum LyapdimStatus lyapdim_lambert_root(double c, double *out);

/**
 * Minimum over `ϰ > 0` of `(a + b e^{ϰτ})/ϰ + 1`.
 *
 * # Safety
 * `out` must be null or point to a writable `LyapdimBound`.
 */
enum LyapdimStatus lyapdim_scalar_bound(double tau, double a, double b, struct LyapdimBound *out);

/**
 * Mackey-Glass bound. `tight` selects `max |F′|` over the absorbing ball;
 * `scaled` also optimizes the time rescaling.
 *
 * # Safety
 * `out` must be null or point to a writable `LyapdimBound`.
 */
enum LyapdimStatus lyapdim_mackey_glass_bound(double beta,
                                              double gamma,
                                              double k,
                                              double tau,
                                              bool tight,
                                              bool scaled,
                                              struct LyapdimBound *out);

/**
 * Bound for the forced delayed oscillator.
 *
 * # Safety
 * `out` must be null or point to a writable `LyapdimBound`.
 */
enum LyapdimStatus lyapdim_suarez_schopf_bound(double alpha,
                                               double gamma,
                                               double tau,
                                               bool scaled,
                                               struct LyapdimBound *out);

/**
 * Roots of `p = a + b e^{−τp}` with the `count` largest real parts.
 *
 * # Safety
 * `out` must be null or point to writable storage for one handle pointer.
 */
enum LyapdimStatus lyapdim_roots_new(double a,
                                     double b,
                                     double tau,
                                     size_t count,
                                     struct LyapdimRootSet **out);

/**
 * # Safety
 * `set` must be null or a handle from [`lyapdim_roots_new`] not yet freed.
 */
void lyapdim_roots_free(struct LyapdimRootSet *set);

/**
 * Number of roots held; zero for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t lyapdim_roots_len(const struct LyapdimRootSet *set);

/**
 * Root `index` (0-based) in nonincreasing order of real part.
 *
 * # Safety
 * `set` must be a live handle; the output pointers must be null or writable.
 */
enum LyapdimStatus lyapdim_roots_get(const struct LyapdimRootSet *set,
                                     size_t index,
                                     double *re,
                                     double *im,
                                     double *residual);

/**
 * Kaplan-Yorke value of the root real parts.
 *
 * # Safety
 * `set` must be a live handle and `out` writable.
 */
enum LyapdimStatus lyapdim_roots_local_dimension(const struct LyapdimRootSet *set, double *out);

/**
 * Number of roots with positive real part.
 *
 * # Safety
 * `set` must be a live handle and `out` writable.
 */
enum LyapdimStatus lyapdim_roots_unstable_count(const struct LyapdimRootSet *set, size_t *out);

/**
 * Kaplan-Yorke dimension of `len` exponents, saturating at `len`.
 *
 * # Safety
 * `lambdas` must point to `len` readable doubles and `out` be writable.
 */
enum LyapdimStatus lyapdim_kaplan_yorke(const double *lambdas, size_t len, double *out);

/**
 * Multiplicative compound of a row-major `n×n` matrix, written row-major
 * into `out`, which must hold `binomial(n, m)²` doubles.
 *
 * # Safety
 * `matrix` must point to `n·n` readable doubles and `out` to `out_len`
 * writable doubles.
 */
enum LyapdimStatus lyapdim_compound(const double *matrix,
                                    size_t n,
                                    size_t m,
                                    double *out,
                                    size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LYAPDIM_H */
