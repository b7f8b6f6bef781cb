#ifndef TWINHEAT_H
#define TWINHEAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TwhStatus {
  TWH_STATUS_OK = 0,
  TWH_STATUS_INVALID_ARGUMENT = 1,
  TWH_STATUS_EMPTY_REGION = 2,
  TWH_STATUS_RESOLUTION = 3,
  TWH_STATUS_UNSUPPORTED = 4,
  TWH_STATUS_NUMERICAL = 5,
  TWH_STATUS_SINGULAR_GRAMIAN = 6,
  TWH_STATUS_INFEASIBLE = 7,
  TWH_STATUS_CONFIG = 8,
  TWH_STATUS_IO = 9,
  TWH_STATUS_NULL_POINTER = 10,
  TWH_STATUS_BUFFER_TOO_SMALL = 11,
  TWH_STATUS_PANIC = 12,
} TwhStatus;

/**
 * Which operator a query refers to.
 */
typedef enum TwhFamily {
  TWH_FAMILY_DIRICHLET = 0,
  TWH_FAMILY_NEUMANN = 1,
  /**
   * The periodic operator on the doubled domain.
   */
  TWH_FAMILY_DOUBLE = 2,
} TwhFamily;

typedef enum TwhMethod {
  TWH_METHOD_HUM = 0,
  TWH_METHOD_LR = 1,
} TwhMethod;

/**
 * Opaque: result of one simultaneous-control run.
 */
typedef struct TwhRun TwhRun;

/**
 * Opaque: grid, coefficients, doubled domain and eigenbases.
 */
typedef struct TwhSetup TwhSetup;

/**
 * Scalar summary of a run. Norms are relative to the initial norms.
 */
typedef struct TwhReport {
  double final_u_l2;
  double final_v_l2;
  double control_cost;
  double dirichlet_trace_residual;
  double neumann_flux_residual;
  double route_gap;
  double tolerance;
  bool within_tolerance;
} TwhReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *twh_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length including the NUL,
 * or 0 when no error has been recorded.
 *
 * # Safety
 * `buf` must be null or writable for `cap` bytes.
 */
size_t twh_last_error_message(char *buf, size_t cap);

/**
 * Builds a setup on `[0, length]` with `n` cells. `kappa` (n values, cell
 * density) and `a` (n + 1 values, face diffusion) may be null for 1.
 *
 * # Safety
 * Non-null arrays must have the stated lengths; `out` must be writable.
 */
enum TwhStatus twh_setup_new(size_t n,
                             double length,
                             const double *kappa,
                             const double *a,
                             struct TwhSetup **out);

/**
 * # Safety
 * `setup` must be null or a handle from [`twh_setup_new`] not yet freed.
 */
void twh_setup_free(struct TwhSetup *setup);

/**
 * Number of cells of the base grid; 0 for a null handle.
 *
 * # Safety
 * `setup` must be null or a live handle.
 */
size_t twh_setup_cells(const struct TwhSetup *setup);

/**
 * Ascending eigenvalues of one operator (n values, 2n for the double).
 *
 * # Safety
 * `setup` must be a live handle; `out` writable for `cap` values; `len`
 * null or writable.
 */
enum TwhStatus twh_eigenvalues(const struct TwhSetup *setup,
                               enum TwhFamily family,
                               double *out,
                               size_t cap,
                               size_t *len);

/**
 * Exact discrete spectral-inequality constant for frequencies ≤ `lambda` on
 * the region `mask` (n bytes, nonzero = inside). For `TWH_FAMILY_DOUBLE`
 * the simultaneous constant is computed on the lifted region. `constant`
 * is +inf when the restriction is rank deficient.
 *
 * # Safety
 * `setup` must be a live handle, `mask` readable for n bytes, the outputs
 * writable (`modes` may be null).
 */
enum TwhStatus twh_spectral_constant(const struct TwhSetup *setup,
                                     enum TwhFamily family,
                                     double lambda,
                                     const uint8_t *mask,
                                     double *constant,
                                     size_t *modes);

/**
 * Steers `(u0, v0)` (n values each) to zero at `horizon` with one control
 * supported on `mask`. `steps = 0` selects the default step count.
 *
 * # Safety
 * `setup` must be a live handle, `u0`/`v0` readable for n values, `mask`
 * for n bytes, `out` writable.
 */
enum TwhStatus twh_control(const struct TwhSetup *setup,
                           const double *u0,
                           const double *v0,
                           const uint8_t *mask,
                           double horizon,
                           enum TwhMethod method,
                           size_t steps,
                           struct TwhRun **out);

/**
 * # Safety
 * `run` must be null or a handle from [`twh_control`] not yet freed.
 */
void twh_run_free(struct TwhRun *run);

/**
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum TwhStatus twh_run_report(const struct TwhRun *run, struct TwhReport *out);

/**
 * Node times of the shared control (steps + 1 values).
 *
 * # Safety
 * `run` must be a live handle; `out` writable for `cap` values; `len` null
 * or writable.
 */
enum TwhStatus twh_run_control_times(const struct TwhRun *run,
                                     double *out,
                                     size_t cap,
                                     size_t *len);

/**
 * Base-grid cell indices carrying the shared control.
 *
 * # Safety
 * As for [`twh_run_control_times`].
 */
enum TwhStatus twh_run_control_cells(const struct TwhRun *run,
                                     size_t *out,
                                     size_t cap,
                                     size_t *len);

/**
 * Shared control values, row-major `steps × cells`.
 *
 * # Safety
 * As for [`twh_run_control_times`].
 */
enum TwhStatus twh_run_control_values(const struct TwhRun *run,
                                      double *out,
                                      size_t cap,
                                      size_t *len);

/**
 * Final Dirichlet and Neumann states (n values each).
 *
 * # Safety
 * `run` must be a live handle; `u`, `v` writable for `cap` values each.
 */
enum TwhStatus twh_run_final_states(const struct TwhRun *run, double *u, double *v, size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWINHEAT_H */
