#ifndef KOBARRIER_H
#define KOBARRIER_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KoStatus {
  KO_STATUS_OK = 0,
  KO_STATUS_NULL_POINTER = 1,
  KO_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed spec document or out-of-range constant.
   */
  KO_STATUS_SPEC = 3,
  /**
   * Argument outside the domain of the operation.
   */
  KO_STATUS_DOMAIN = 4,
  /**
   * Quadrature, root finding or a sigma search gave up.
   */
  KO_STATUS_NUMERICAL = 5,
  KO_STATUS_INVALID = 6,
  KO_STATUS_PANIC = 7,
} KoStatus;

typedef enum KoVerdictCode {
  KO_VERDICT_CODE_HOLDS = 0,
  KO_VERDICT_CODE_FAILS = 1,
  KO_VERDICT_CODE_INCONCLUSIVE = 2,
} KoVerdictCode;

typedef enum KoBarrierKind {
  KO_BARRIER_KIND_SUPER = 0,
  KO_BARRIER_KIND_SUPER_BOUNDED = 1,
  KO_BARRIER_KIND_SUPER_GRADIENT = 2,
  /**
   * Glued subsolution; `eps` in the parameters is ignored (chosen
   * automatically).
   */
  KO_BARRIER_KIND_SUB = 3,
  /**
   * Annulus `[R/2, R]` with `R = t1`, boundary values `eps` and `eta`.
   */
  KO_BARRIER_KIND_ANNULUS = 4,
} KoBarrierKind;

typedef enum KoGroupMode {
  KO_GROUP_MODE_MULTIPLY = 0,
  KO_GROUP_MODE_INVERSE_OF_FIRST_THEN_MULTIPLY = 1,
} KoGroupMode;

/**
 * Constructed barrier.
 */
typedef struct KoBarrier KoBarrier;

/**
 * Parsed problem spec.
 */
typedef struct KoSpec KoSpec;

typedef struct KoBarrierParams {
  double eps;
  double eta;
  double t0;
  double t1;
  double btilde;
  double ceiling;
} KoBarrierParams;

typedef struct KoKoranyi {
  double r;
  double psi;
} KoKoranyi;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a JSON problem spec into `*out`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum KoStatus ko_spec_from_json(const char *json, struct KoSpec **out);

/**
 * # Safety
 * `spec` must be null or a handle from [`ko_spec_from_json`] not yet freed.
 */
void ko_spec_free(struct KoSpec *spec);

/**
 * Decides the KO condition, or its hat form when `hat` is true (which
 * needs a difference-form spec).
 *
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer.
 */
enum KoStatus ko_decide(const struct KoSpec *spec, bool hat, enum KoVerdictCode *out);

/**
 * `K(t)`.
 *
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer.
 */
enum KoStatus ko_big_k(const struct KoSpec *spec, double t, double *out);

/**
 * `K^{-1}(u)`.
 *
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer.
 */
enum KoStatus ko_big_k_inverse(const struct KoSpec *spec, double u, double *out);

/**
 * Builds a barrier of the given kind into `*out`.
 *
 * # Safety
 * `spec` must be a live handle, `params` and `out` valid pointers.
 */
enum KoStatus ko_barrier_build(const struct KoSpec *spec,
                               enum KoBarrierKind kind,
                               const struct KoBarrierParams *params,
                               struct KoBarrier **out);

/**
 * Supersolution with the blow-up construction; shorthand for
 * [`ko_barrier_build`] with `KoBarrierKind::Super`.
 *
 * # Safety
 * As for [`ko_barrier_build`].
 */
enum KoStatus ko_barrier_build_super(const struct KoSpec *spec,
                                     const struct KoBarrierParams *params,
                                     struct KoBarrier **out);

/**
 * Writes `(alpha, alpha', alpha'')` at `t` into `out[0..3]`.
 *
 * # Safety
 * `barrier` must be a live handle and `out` point to 3 writable doubles.
 */
enum KoStatus ko_barrier_eval(const struct KoBarrier *barrier, double t, double *out);

/**
 * End of the barrier's domain: blow-up time, ceiling time, outer radius,
 * or infinity for the subsolution.
 *
 * # Safety
 * `barrier` must be a live handle and `out` a valid pointer.
 */
enum KoStatus ko_barrier_t_end(const struct KoBarrier *barrier, double *out);

/**
 * Final sigma of the construction (NaN when there is none).
 *
 * # Safety
 * `barrier` must be a live handle and `out` a valid pointer.
 */
enum KoStatus ko_barrier_sigma(const struct KoBarrier *barrier, double *out);

/**
 * Gluing radius of a subsolution; `KO_STATUS_INVALID` for other kinds.
 *
 * # Safety
 * `barrier` must be a live handle and `out` a valid pointer.
 */
enum KoStatus ko_barrier_t_sigma(const struct KoBarrier *barrier, double *out);

/**
 * # Safety
 * `barrier` must be null or a handle from [`ko_barrier_build`] not yet freed.
 */
void ko_barrier_free(struct KoBarrier *barrier);

/**
 * Koranyi gauge and density of `coords` (length `2m + 1`), measured from
 * `base` when it is non-null.
 *
 * # Safety
 * `coords` (and `base` if non-null) must point to `2m + 1` doubles; `out`
 * must be valid.
 */
enum KoStatus ko_koranyi(size_t m, const double *coords, const double *base, struct KoKoranyi *out);

/**
 * `a o b` (or `a^{-1} o b`) on `H^m`, written to `out[0..2m+1]`.
 *
 * # Safety
 * `a`, `b` and `out` must each point to `2m + 1` doubles.
 */
enum KoStatus ko_group_op(size_t m,
                          const double *a,
                          const double *b,
                          enum KoGroupMode mode,
                          double *out);

/**
 * Runs a CLI command (`"validate"`, `"ko"`, `"verify"`, `"full-report"`,
 * ...) with default parameters on `spec` and returns the JSON report in
 * `*out_json`, to be released with [`ko_string_free`]. The report's own
 * `status` field carries certificate failures; the return value is
 * non-`Ok` only when no report could be produced.
 *
 * # Safety
 * `spec` must be a live handle, `command` a NUL-terminated string and
 * `out_json` a valid pointer.
 */
enum KoStatus ko_run_report_json(const struct KoSpec *spec,
                                 const char *command,
                                 uint64_t seed,
                                 char **out_json);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void ko_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into the library on the same thread.
 */
const char *ko_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KOBARRIER_H */
