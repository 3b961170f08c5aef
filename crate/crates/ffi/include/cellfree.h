#ifndef CELLFREE_H
#define CELLFREE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum CfStatus {
  CF_STATUS_OK = 0,
  CF_STATUS_NULL_POINTER = 1,
  CF_STATUS_INVALID_INPUT = 2,
  CF_STATUS_DIMENSION_MISMATCH = 3,
  CF_STATUS_NOT_POSITIVE_SEMIDEFINITE = 4,
  CF_STATUS_NON_FINITE = 5,
  CF_STATUS_ITERATION_CAP = 6,
  CF_STATUS_NUMERICAL_FAILURE = 7,
  CF_STATUS_BRACKET_FAILURE = 8,
  CF_STATUS_CONFIG = 9,
  CF_STATUS_IO = 10,
  CF_STATUS_PANIC = 11,
} CfStatus;

/**
 * Channel estimator codes accepted by the scenario constructors.
 */
typedef enum CfEstimator {
  CF_ESTIMATOR_LMMSE = 0,
  CF_ESTIMATOR_SUBOPTIMAL = 1,
} CfEstimator;

/**
 * Opaque network realization.
 */
typedef struct CfScenario CfScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on the calling thread, or null if
 * none. Valid until the next failing call on the same thread.
 */
const char *cf_last_error(void);

/**
 * Draws a network on a `area_side_m` square with the default propagation
 * model and random pilots. Powers are in watts; `correlated` selects
 * correlated shadowing. Deterministic in `seed`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum CfStatus cf_scenario_generate(size_t num_aps,
                                   size_t num_users,
                                   size_t tau,
                                   double area_side_m,
                                   bool correlated,
                                   double pilot_w,
                                   double uplink_w,
                                   double downlink_w,
                                   uint32_t estimator_kind,
                                   uint64_t seed,
                                   struct CfScenario **out);

/**
 * Builds a scenario from a caller-supplied `M x K` large-scale matrix
 * (column-major) and noise-normalized powers. Pilots are random, drawn from
 * `seed`.
 *
 * # Safety
 * `beta` must point to `beta_len` readable doubles and `out` to writable
 * storage for one pointer.
 */
enum CfStatus cf_scenario_from_beta(const double *beta,
                                    size_t beta_len,
                                    size_t num_aps,
                                    size_t num_users,
                                    size_t tau,
                                    double rho_p,
                                    double rho_u,
                                    double rho_d,
                                    uint32_t estimator_kind,
                                    uint64_t seed,
                                    struct CfScenario **out);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer returned by a scenario constructor that has
 * not been freed.
 */
void cf_scenario_free(struct CfScenario *s);

/**
 * Number of APs, or 0 for a null scenario.
 *
 * # Safety
 * `s` must be null or a live scenario.
 */
size_t cf_scenario_num_aps(const struct CfScenario *s);

/**
 * Number of users, or 0 for a null scenario.
 *
 * # Safety
 * `s` must be null or a live scenario.
 */
size_t cf_scenario_num_users(const struct CfScenario *s);

/**
 * Copies the large-scale fading matrix into `out` (`M * K` doubles).
 *
 * # Safety
 * `s` must be a live scenario and `out` point to `len` writable doubles.
 */
enum CfStatus cf_scenario_beta(const struct CfScenario *s, double *out, size_t len);

/**
 * Copies the estimate variances `gamma_mk` into `out` (`M * K` doubles).
 *
 * # Safety
 * `s` must be a live scenario and `out` point to `len` writable doubles.
 */
enum CfStatus cf_scenario_gamma(const struct CfScenario *s, double *out, size_t len);

/**
 * Uplink SINR of every user under power coefficients `eta` (length K).
 *
 * # Safety
 * `s` must be a live scenario; `eta` and `out_sinr` must point to
 * `num_users` doubles.
 */
enum CfStatus cf_uplink_sinr(const struct CfScenario *s,
                             const double *eta,
                             double *out_sinr,
                             size_t num_users);

/**
 * Downlink SINR of every user under the `M x K` coefficient matrix `eta`.
 *
 * # Safety
 * `s` must be a live scenario; `eta` must point to `eta_len` doubles and
 * `out_sinr` to `num_users` doubles.
 */
enum CfStatus cf_downlink_sinr(const struct CfScenario *s,
                               const double *eta,
                               size_t eta_len,
                               double *out_sinr,
                               size_t num_users);

/**
 * Uplink max-min power control. Writes the optimal coefficients and the
 * max-min SINR.
 *
 * # Safety
 * `s` must be a live scenario, `out_eta` must point to `num_users` doubles
 * and `out_t` to one double.
 */
enum CfStatus cf_uplink_maxmin(const struct CfScenario *s,
                               double rel_tol,
                               double *out_eta,
                               size_t num_users,
                               double *out_t);

/**
 * Downlink max-min power control through the cone program. Writes the
 * `M x K` coefficients and the max-min SINR.
 *
 * # Safety
 * `s` must be a live scenario, `out_eta` must point to `eta_len` doubles and
 * `out_t` to one double.
 */
enum CfStatus cf_downlink_maxmin(const struct CfScenario *s,
                                 double rel_tol,
                                 double *out_eta,
                                 size_t eta_len,
                                 double *out_t);

/**
 * Distributed target-SINR power control. `delta` holds one linear target
 * per user. `out_converged` reports whether every target was met within
 * `epsilon`; unreachable targets are not an error.
 *
 * # Safety
 * `s` must be a live scenario; `delta`, `out_eta` and `out_sinr` must point
 * to `num_users` doubles and `out_converged` to one bool.
 */
enum CfStatus cf_target_sinr(const struct CfScenario *s,
                             const double *delta,
                             size_t num_users,
                             double epsilon,
                             size_t max_iters,
                             double *out_eta,
                             double *out_sinr,
                             bool *out_converged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CELLFREE_H */
