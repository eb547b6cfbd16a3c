#ifndef PREDKL_H
#define PREDKL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PredklStatus {
  PREDKL_STATUS_OK = 0,
  PREDKL_STATUS_NULL_POINTER = 1,
  PREDKL_STATUS_INVALID_ARGUMENT = 2,
  PREDKL_STATUS_NUMERICAL = 3,
  PREDKL_STATUS_PANIC = 4,
} PredklStatus;

typedef enum PredklVerdict {
  PREDKL_VERDICT_FINITE = 0,
  PREDKL_VERDICT_INFINITE = 1,
  PREDKL_VERDICT_HOLDS = 2,
  PREDKL_VERDICT_FAILS = 3,
  PREDKL_VERDICT_INCONCLUSIVE = 4,
} PredklVerdict;

// Opaque model handle.
typedef struct PredklModel PredklModel;

// Opaque prior handle (prior plus its marginal evaluator).
typedef struct PredklPrior PredklPrior;

// Monte-Carlo estimate with its standard error.
typedef struct PredklEstimate {
  double value;
  double std_error;
  uint64_t n;
} PredklEstimate;

// Both sides of the KL / quadratic-risk identity.
typedef struct PredklBridgeResult {
  double lhs;
  double lhs_std_error;
  double rhs;
  double rhs_error_bound;
  double discrepancy;
  double tolerance;
  // 1 when `discrepancy <= tolerance`.
  int32_t pass;
} PredklBridgeResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, static NUL-terminated string.
const char *predkl_version(void);

// Message of the last failed call on this thread ("" after a success).
// Valid until the next call into the library on the same thread.
const char *predkl_last_error(void);

// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum PredklStatus predkl_model_new(size_t p, double vx, double vy, struct PredklModel **out);

// # Safety
// `model` must come from [`predkl_model_new`] and not be freed twice. Null is ignored.
void predkl_model_free(struct PredklModel *model);

// Flat prior in dimension `p`.
//
// # Safety
// `out` must be valid for writing one handle.
enum PredklStatus predkl_prior_uniform(size_t p, struct PredklPrior **out);

// `|mu|^-b`, `0 <= b < p`.
//
// # Safety
// `out` must be valid for writing one handle.
enum PredklStatus predkl_prior_power(double b, size_t p, struct PredklPrior **out);

// `|mu|^-(p-2)`, `p >= 3`.
//
// # Safety
// `out` must be valid for writing one handle.
enum PredklStatus predkl_prior_harmonic(size_t p, struct PredklPrior **out);

// Normalised `N_p(0, tau2 I)` prior.
//
// # Safety
// `out` must be valid for writing one handle.
enum PredklStatus predkl_prior_gaussian(double tau2, size_t p, struct PredklPrior **out);

// Proper truncation `j_n^2 pi` of `base`.
//
// # Safety
// `base` must be a live prior handle; `out` valid for writing one handle.
enum PredklStatus predkl_prior_blyth(const struct PredklPrior *base,
                                     uint32_t n,
                                     struct PredklPrior **out);

// Dimension of a prior, 0 for null.
//
// # Safety
// `prior` must be null or a live handle.
size_t predkl_prior_dim(const struct PredklPrior *prior);

// # Safety
// `prior` must come from a prior constructor and not be freed twice. Null is ignored.
void predkl_prior_free(struct PredklPrior *prior);

// `log m_pi(z; v)`.
//
// # Safety
// `z` must point to `len` doubles; `out` to one writable double.
enum PredklStatus predkl_log_marginal(const struct PredklPrior *prior,
                                      const double *z,
                                      size_t len,
                                      double v,
                                      double *out);

// `log p_pi(y | x)` of the Bayes predictive density.
//
// # Safety
// `x` and `y` must each point to `len` doubles; `out` to one writable double.
enum PredklStatus predkl_bayes_predictive_logdensity(const struct PredklPrior *prior,
                                                     const struct PredklModel *model,
                                                     const double *x,
                                                     const double *y,
                                                     size_t len,
                                                     double *out);

// Posterior mean `z + v grad log m(z; v)`, written to `out[0..len]`.
//
// # Safety
// `z` and `out` must each point to `len` doubles.
enum PredklStatus predkl_posterior_mean(const struct PredklPrior *prior,
                                        const double *z,
                                        size_t len,
                                        double v,
                                        double *out);

// `R_KL(mu, uniform) - R_KL(mu, pi)` with `n` draws.
//
// # Safety
// `mu` must point to `len` doubles; `out` to one writable estimate.
enum PredklStatus predkl_kl_risk_diff(const struct PredklModel *model,
                                      const struct PredklPrior *prior,
                                      const double *mu,
                                      size_t len,
                                      size_t n,
                                      uint64_t seed,
                                      size_t workers,
                                      struct PredklEstimate *out);

// Both sides of the identity with `n` draws per side and `nodes`
// Gauss-Legendre nodes. A failed comparison is still `Ok` with `pass = 0`;
// a side that could not be computed is `Numerical`.
//
// # Safety
// `mu` must point to `len` doubles; `out` to one writable result.
enum PredklStatus predkl_verify_bridge(const struct PredklModel *model,
                                       const struct PredklPrior *prior,
                                       const double *mu,
                                       size_t len,
                                       size_t n,
                                       size_t nodes,
                                       uint64_t seed,
                                       size_t workers,
                                       struct PredklBridgeResult *out);

// Growth condition verdict; `value` (optional) receives the truncated
// integral or NaN.
//
// # Safety
// `out` must be writable; `value` null or writable.
enum PredklStatus predkl_check_growth(const struct PredklPrior *prior,
                                      enum PredklVerdict *out,
                                      double *value);

// Integrated gradient condition verdict; `value` as for growth.
//
// # Safety
// `out` must be writable; `value` null or writable.
enum PredklStatus predkl_check_gradient(const struct PredklPrior *prior,
                                        enum PredklVerdict *out,
                                        double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREDKL_H */
