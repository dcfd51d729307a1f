#ifndef SPDE_SPLIT_H
#define SPDE_SPLIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpdeStatus {
  SPDE_STATUS_OK = 0,
  SPDE_STATUS_NULL_POINTER = 1,
  SPDE_STATUS_INVALID_ARGUMENT = 2,
  SPDE_STATUS_GRID_MISMATCH = 3,
  SPDE_STATUS_NON_FINITE = 4,
  SPDE_STATUS_DIVERGED = 5,
  SPDE_STATUS_INTERNAL = 6,
} SpdeStatus;

typedef enum SpdeScheme {
  SPDE_SCHEME_SPLIT = 0,
  SPDE_SCHEME_SPLIT_EXACT = 1,
  SPDE_SCHEME_EULER_MARUYAMA = 2,
  SPDE_SCHEME_SEMI_IMPLICIT_EULER = 3,
  SPDE_SCHEME_STOCHASTIC_EXPONENTIAL = 4,
  SPDE_SCHEME_CRANK_NICOLSON = 5,
} SpdeScheme;

typedef enum SpdeCovariance {
  SPDE_COVARIANCE_POWER_LAW2 = 0,
  SPDE_COVARIANCE_POWER_LAW4 = 1,
} SpdeCovariance;

typedef enum SpdeNonlinearity {
  SPDE_NONLINEARITY_ZERO = 0,
  // `V[u] = V`, with `potential` holding `V` at the nodes.
  SPDE_NONLINEARITY_EXTERNAL = 1,
  // `V[u] = V ⋆ |u|²`, with `potential` holding the kernel at the nodes.
  SPDE_NONLINEARITY_NONLOCAL = 2,
  SPDE_NONLINEARITY_CUBIC_PLUS = 3,
  SPDE_NONLINEARITY_CUBIC_MINUS = 4,
} SpdeNonlinearity;

// Opaque simulator handle.
typedef struct SpdeSimulator SpdeSimulator;

// Simulator parameters. `potential` must point to `nx` values for the
// external and nonlocal variants and is ignored otherwise.
typedef struct SpdeParams {
  size_t nx;
  double tau;
  double alpha;
  enum SpdeScheme scheme;
  enum SpdeCovariance covariance;
  enum SpdeNonlinearity nonlinearity;
  const double *potential;
  uint64_t seed;
  uint64_t sample_index;
} SpdeParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a simulator with a zero initial state and writes its handle to
// `*out`. On failure `*out` is set to null.
//
// # Safety
// `params` must point to a valid [`SpdeParams`]; `out` must be writable.
enum SpdeStatus spde_simulator_new(const struct SpdeParams *params, struct SpdeSimulator **out);

// Releases a simulator. Null is ignored.
//
// # Safety
// `sim` must be null or a handle from [`spde_simulator_new`] not yet freed.
void spde_simulator_free(struct SpdeSimulator *sim);

// Replaces the state with nodal values `re[j] + i·im[j]`, `j < len`.
// The step counter, and so the position on the noise path, is kept.
//
// # Safety
// `sim` must be a live handle; `re` and `im` must each hold `len` values.
enum SpdeStatus spde_simulator_set_state(struct SpdeSimulator *sim,
                                         const double *re,
                                         const double *im,
                                         size_t len);

// Advances `n_steps` steps. On divergence the state is left at the last
// finite step and [`SpdeStatus::Diverged`] is returned.
//
// # Safety
// `sim` must be a live handle.
enum SpdeStatus spde_simulator_step(struct SpdeSimulator *sim, uint64_t n_steps);

// Writes `M(u) = ‖u‖²` to `*out`.
//
// # Safety
// `sim` must be a live handle; `out` must be writable.
enum SpdeStatus spde_simulator_mass(const struct SpdeSimulator *sim, double *out);

// Number of steps taken so far; 0 for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
uint64_t spde_simulator_steps(const struct SpdeSimulator *sim);

// Copies the nodal values into `re` and `im`, which must hold `len == nx`
// values each.
//
// # Safety
// `sim` must be a live handle; `re` and `im` must be writable for `len`.
enum SpdeStatus spde_simulator_get_nodes(const struct SpdeSimulator *sim,
                                         double *re,
                                         double *im,
                                         size_t len);

// Writes `Tr(Q) = Σ γ_k²` over the `nx` resolved modes to `*out`.
//
// # Safety
// `out` must be writable.
enum SpdeStatus spde_trace_q(enum SpdeCovariance kind, size_t nx, double *out);

// Message of the last failed call on this thread, or null. Valid until
// the next call into this library on the same thread.
const char *spde_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *spde_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPDE_SPLIT_H */
