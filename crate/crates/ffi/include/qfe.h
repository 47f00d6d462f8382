#ifndef QFE_H
#define QFE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QfeConvention {
  QFE_CONVENTION_PER_SHOT = 0,
  QFE_CONVENTION_PER_RESOURCE = 1,
} QfeConvention;

typedef enum QfeMethod {
  QFE_METHOD_NEAREST_NEIGHBOUR = 0,
  QFE_METHOD_LINEAR = 1,
} QfeMethod;

typedef enum QfeProbe {
  QFE_PROBE_SINGLE = 0,
  QFE_PROBE_NOON2 = 1,
} QfeProbe;

typedef enum QfeStatus {
  QFE_STATUS_OK = 0,
  QFE_STATUS_NULL_POINTER = 1,
  QFE_STATUS_INVALID_ARGUMENT = 2,
  QFE_STATUS_DOMAIN = 3,
  QFE_STATUS_RANGE = 4,
  // Unidentifiable phase, normalization or quadrature failure.
  QFE_STATUS_NUMERICAL = 5,
  QFE_STATUS_IO = 6,
  QFE_STATUS_CONFIG = 7,
  QFE_STATUS_BUFFER_TOO_SMALL = 8,
  QFE_STATUS_PANIC = 9,
} QfeStatus;

// Opaque campaign result.
typedef struct QfeCampaign QfeCampaign;

// Opaque Bayesian estimator configuration for one probe.
typedef struct QfeEstimator QfeEstimator;

// Opaque sampled function `x -> phi` with optional variances.
typedef struct QfeFunction QfeFunction;

typedef struct QfeFisherMatrix {
  double f_pp;
  double f_pv;
  double f_vv;
} QfeFisherMatrix;

typedef struct QfePointEstimate {
  double phi_b;
  double var_phi;
  double vis_b;
  double var_vis;
  double boundary_mass;
  uint64_t n_shots;
} QfePointEstimate;

typedef struct QfeCampaignRow {
  enum QfeProbe probe;
  uint64_t n_resources;
  enum QfeMethod method;
  size_t n_s;
  double delta2_mean;
  double delta2_std;
  // Set when the row failed; the numbers are then NaN.
  bool failed;
} QfeCampaignRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *qfe_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *qfe_version(void);

// Number of projection settings of a probe.
size_t qfe_probe_settings(enum QfeProbe probe);

// Writes the outcome probabilities into `out[0..len]`; `len` must be at
// least [`qfe_probe_settings`].
//
// # Safety
// `out` must be valid for `len` writes.
enum QfeStatus qfe_outcome_probabilities(enum QfeProbe probe,
                                         double phi,
                                         double vis,
                                         double *out,
                                         size_t len);

// Per-shot Fisher matrix in (phase, visibility).
//
// # Safety
// `out` must be valid for writes.
enum QfeStatus qfe_fisher_matrix(enum QfeProbe probe,
                                 double phi,
                                 double vis,
                                 struct QfeFisherMatrix *out);

// Per-shot phase Fisher information with the visibility as nuisance.
//
// # Safety
// `out` must be valid for writes.
enum QfeStatus qfe_effective_fisher(enum QfeProbe probe, double phi, double vis, double *out);

// Cramér–Rao phase variance for a resource budget.
//
// # Safety
// `out` must be valid for writes.
enum QfeStatus qfe_crb_variance(enum QfeProbe probe,
                                double phi,
                                double vis,
                                uint64_t n_resources,
                                enum QfeConvention convention,
                                double *out);

// Builds a sampled function from `len` points; `variances` may be null.
//
// # Safety
// `xs`, `phis` and a non-null `variances` must hold `len` readable values;
// `out` must be valid for writes.
enum QfeStatus qfe_function_new(const double *xs,
                                const double *phis,
                                const double *variances,
                                size_t len,
                                struct QfeFunction **out);

// # Safety
// `f` must be null or a handle from this library not yet freed.
void qfe_function_free(struct QfeFunction *f);

// Number of points, 0 for a null handle.
//
// # Safety
// `f` must be null or a live handle.
size_t qfe_function_len(const struct QfeFunction *f);

// Evenly spread subset of `n_s` points.
//
// # Safety
// `f` must be a live handle; `out` must be valid for writes.
enum QfeStatus qfe_function_select_subset(const struct QfeFunction *f,
                                          size_t n_s,
                                          struct QfeFunction **out);

// Evaluates the interpolant at `n` targets.
//
// # Safety
// `f` must be a live handle; `targets` and `out` must hold `n` values.
enum QfeStatus qfe_function_interpolate(const struct QfeFunction *f,
                                        enum QfeMethod m,
                                        const double *targets,
                                        size_t n,
                                        double *out);

// δ² of `points` interpolated onto the grid of `reference`.
//
// # Safety
// Both handles must be live; `out` must be valid for writes.
enum QfeStatus qfe_delta_squared(const struct QfeFunction *points,
                                 const struct QfeFunction *reference,
                                 enum QfeMethod m,
                                 double *out);

// Estimator on the probe's fundamental domain with an `n_phi × n_vis` grid.
//
// # Safety
// `out` must be valid for writes.
enum QfeStatus qfe_estimator_new(enum QfeProbe probe,
                                 size_t n_phi,
                                 size_t n_vis,
                                 struct QfeEstimator **out);

// Replaces the prior support.
//
// # Safety
// `e` must be a live handle.
enum QfeStatus qfe_estimator_set_support(struct QfeEstimator *e,
                                         double phi_lo,
                                         double phi_hi,
                                         double vis_lo,
                                         double vis_hi);

// Posterior means and variances from one count vector.
//
// # Safety
// `e` must be a live handle, `counts` must hold `n` values and `out` must be
// valid for writes.
enum QfeStatus qfe_estimator_estimate(const struct QfeEstimator *e,
                                      const uint64_t *counts,
                                      size_t n,
                                      struct QfePointEstimate *out);

// # Safety
// `e` must be null or a live handle.
void qfe_estimator_free(struct QfeEstimator *e);

// Runs a campaign from configuration text.
//
// # Safety
// `config` must be a NUL-terminated UTF-8 string; `out` must be valid for
// writes.
enum QfeStatus qfe_campaign_run(const char *config, struct QfeCampaign **out);

// Number of rows, 0 for a null handle.
//
// # Safety
// `c` must be null or a live handle.
size_t qfe_campaign_len(const struct QfeCampaign *c);

// Copies row `i`.
//
// # Safety
// `c` must be a live handle; `out` must be valid for writes.
enum QfeStatus qfe_campaign_row(const struct QfeCampaign *c, size_t i, struct QfeCampaignRow *out);

// # Safety
// `c` must be null or a live handle.
void qfe_campaign_free(struct QfeCampaign *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QFE_H */
