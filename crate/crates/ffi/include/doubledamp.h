#ifndef DOUBLEDAMP_H
#define DOUBLEDAMP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DdStatus {
  DD_STATUS_OK = 0,
  DD_STATUS_NULL_POINTER = 1,
  DD_STATUS_INVALID_ARGUMENT = 2,
  DD_STATUS_SINGULAR_SYSTEM = 3,
  DD_STATUS_NOT_SUBCRITICAL = 4,
  DD_STATUS_BUFFER_TOO_SMALL = 5,
  DD_STATUS_NO_RESULT = 6,
  DD_STATUS_INTERNAL = 7,
  DD_STATUS_PANIC = 8,
} DdStatus;

typedef enum DdClassification {
  DD_CLASSIFICATION_SUPERCRITICAL = 0,
  DD_CLASSIFICATION_CRITICAL = 1,
  DD_CLASSIFICATION_SUBCRITICAL = 2,
} DdClassification;

/**
 * Which per-component norm series to read from a simulation.
 */
typedef enum DdNorm {
  DD_NORM_L2 = 0,
  DD_NORM_H_SIGMA = 1,
  DD_NORM_SUP = 2,
  DD_NORM_MEAN = 3,
} DdNorm;

/**
 * System parameters `(n, sigma, p_1..p_k)`.
 */
typedef struct DdParams DdParams;

/**
 * A configured run and, once executed, its result.
 */
typedef struct DdSimulation DdSimulation;

/**
 * Modal propagator values at `(t, a)`.
 */
typedef struct DdPropagator {
  double t;
  double k0;
  double k1;
  double dk0;
  double dk1;
  double i1;
  double i2;
} DdPropagator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *dd_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dd_version(void);

/**
 * # Safety
 * `s` is NULL or a string returned by this library that was not freed yet.
 */
void dd_string_free(char *s);

/**
 * Creates parameters from `k` exponents at `p`.
 *
 * # Safety
 * `p` points to `k` readable doubles and `out` to a writable handle slot.
 */
enum DdStatus dd_params_new(size_t n,
                            double sigma,
                            const double *p,
                            size_t k,
                            struct DdParams **out);

/**
 * # Safety
 * `params` is NULL or a handle from [`dd_params_new`] that was not freed yet.
 */
void dd_params_free(struct DdParams *params);

/**
 * Number of components `k`.
 *
 * # Safety
 * `params` is a live handle and `out` is writable.
 */
enum DdStatus dd_params_components(const struct DdParams *params, size_t *out);

/**
 * Writes the `k` entries of `gamma` to `out`, which holds `len` doubles.
 *
 * # Safety
 * `params` is a live handle and `out` points to `len` writable doubles.
 */
enum DdStatus dd_gamma(const struct DdParams *params, double *out, size_t len);

/**
 * # Safety
 * `params` is a live handle and `out` is writable.
 */
enum DdStatus dd_classify(const struct DdParams *params, enum DdClassification *out);

/**
 * Exponent `-1 / (max gamma - n/(2 sigma))` of the lifespan; subcritical systems only.
 *
 * # Safety
 * `params` is a live handle and `out` is writable.
 */
enum DdStatus dd_lifespan_exponent(const struct DdParams *params, double *out);

/**
 * Full exponent report as JSON; free the string with [`dd_string_free`].
 *
 * # Safety
 * `params` is a live handle and `out` is writable.
 */
enum DdStatus dd_exponent_report_json(const struct DdParams *params, double eps, char **out);

/**
 * Modal propagator of `u'' + (1 + a) u' + a u = f`.
 *
 * # Safety
 * `out` is writable.
 */
enum DdStatus dd_propagator(double t, double a, struct DdPropagator *out);

/**
 * Configures a run on `[-half_length, half_length]^n` with `points` per
 * dimension and the Gaussian data `eps exp(-|x|^2 / width^2)` for every
 * `u_0` and `u_1`. The parameters are copied.
 *
 * # Safety
 * `params` is a live handle and `out` is a writable handle slot.
 */
enum DdStatus dd_simulation_new(const struct DdParams *params,
                                size_t points,
                                double half_length,
                                double eps,
                                double width,
                                bool nonlinear,
                                struct DdSimulation **out);

/**
 * # Safety
 * `sim` is NULL or a handle from [`dd_simulation_new`] that was not freed yet.
 */
void dd_simulation_free(struct DdSimulation *sim);

/**
 * Integrates to `t_end` with an adaptive step starting at `dt`, recording
 * norms 40 times per decade. `blew_up` may be NULL.
 *
 * # Safety
 * `sim` is a live handle; `blew_up` is NULL or writable.
 */
enum DdStatus dd_simulation_run(struct DdSimulation *sim, double t_end, double dt, bool *blew_up);

/**
 * Number of recorded instants.
 *
 * # Safety
 * `sim` is a live handle and `out` is writable.
 */
enum DdStatus dd_simulation_record_count(const struct DdSimulation *sim, size_t *out);

/**
 * Blow-up time; [`DdStatus::NoResult`] when the run reached `t_end`.
 *
 * # Safety
 * `sim` is a live handle and `out` is writable.
 */
enum DdStatus dd_simulation_blowup_time(const struct DdSimulation *sim, double *out);

/**
 * Copies the record times into `out`, which holds `len` doubles.
 *
 * # Safety
 * `sim` is a live handle and `out` points to `len` writable doubles.
 */
enum DdStatus dd_simulation_times(const struct DdSimulation *sim, double *out, size_t len);

/**
 * Copies one norm series of component `component` (zero-based) into `out`.
 *
 * # Safety
 * `sim` is a live handle and `out` points to `len` writable doubles.
 */
enum DdStatus dd_simulation_norms(const struct DdSimulation *sim,
                                  size_t component,
                                  enum DdNorm norm,
                                  double *out,
                                  size_t len);

/**
 * Reads a NUL-terminated comma-separated list such as `"2,3.5"` into `out`.
 *
 * # Safety
 * `text` is a valid C string; `out` points to `len` writable doubles and
 * `count` is writable.
 */
enum DdStatus dd_parse_exponents(const char *text, double *out, size_t len, size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOUBLEDAMP_H */
