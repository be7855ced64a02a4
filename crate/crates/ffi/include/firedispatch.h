#ifndef FIREDISPATCH_H
#define FIREDISPATCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Policy construction method.
 */
typedef enum FdMethod {
  FD_METHOD_CLOSEST_FIRST = 0,
  FD_METHOD_OPTIMAL = 1,
  FD_METHOD_ONE_STEP_IMPROVEMENT = 2,
  FD_METHOD_APPROXIMATE_IMPROVEMENT = 3,
} FdMethod;

/**
 * Status codes returned by every function.
 */
typedef enum FdStatus {
  FD_STATUS_OK = 0,
  FD_STATUS_NULL_POINTER = 1,
  FD_STATUS_INVALID_ARGUMENT = 2,
  FD_STATUS_INVALID_INSTANCE = 3,
  FD_STATUS_SOLVER = 4,
  FD_STATUS_NON_CONVERGENCE = 5,
  FD_STATUS_IO = 6,
  FD_STATUS_PANIC = 7,
} FdStatus;

/**
 * Opaque tardiness-probability table.
 */
typedef struct FdCostTable FdCostTable;

/**
 * Opaque problem instance.
 */
typedef struct FdInstance FdInstance;

/**
 * Opaque dispatch policy.
 */
typedef struct FdPolicy FdPolicy;

typedef struct FdSimResult {
  uint64_t incidents;
  uint64_t late;
  double flar_hat;
  double ci_halfwidth;
  uint64_t seed;
} FdSimResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *fd_last_error(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void fd_string_free(char *s);

/**
 * Generates a random instance. A negative `sparseness` draws it from the seed.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdStatus fd_instance_generate(size_t d,
                                   size_t stations,
                                   double rho,
                                   double gamma,
                                   double sparseness,
                                   bool correlated,
                                   uint64_t seed,
                                   struct FdInstance **out);

/**
 * Parses an instance from a NUL-terminated JSON document.
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum FdStatus fd_instance_from_json(const char *json, struct FdInstance **out);

/**
 * Serializes an instance; release the result with [`fd_string_free`].
 *
 * # Safety
 * `inst` must be a live handle and `out` a valid pointer.
 */
enum FdStatus fd_instance_to_json(const struct FdInstance *inst, char **out);

/**
 * Number of stations and demand nodes.
 *
 * # Safety
 * `inst` must be a live handle; outputs must be valid pointers.
 */
enum FdStatus fd_instance_sizes(const struct FdInstance *inst, size_t *stations, size_t *nodes);

/**
 * # Safety
 * `inst` must come from this library and not be freed twice.
 */
void fd_instance_free(struct FdInstance *inst);

/**
 * Builds the cost table in the instance's correlation mode.
 *
 * # Safety
 * `inst` must be a live handle and `out` a valid pointer.
 */
enum FdStatus fd_cost_table_build(const struct FdInstance *inst, struct FdCostTable **out);

/**
 * Tardiness probability of dispatching from `a` and `b` (0 = outside,
 * 1..=I stations) to node `j`.
 *
 * # Safety
 * `table` must be a live handle and `out` a valid pointer.
 */
enum FdStatus fd_cost_table_get(const struct FdCostTable *table,
                                size_t a,
                                size_t b,
                                size_t j,
                                double *out);

/**
 * # Safety
 * `table` must come from this library and not be freed twice.
 */
void fd_cost_table_free(struct FdCostTable *table);

/**
 * Computes a policy. `osia_horizon <= 0` selects the default `10/μ`.
 *
 * # Safety
 * `inst` must be a live handle and `out` a valid pointer.
 */
enum FdStatus fd_policy_solve(const struct FdInstance *inst,
                              enum FdMethod method,
                              double osia_horizon,
                              struct FdPolicy **out);

/**
 * Dispatch pair for state index `state` and node `j`, as labels (0 = outside).
 *
 * # Safety
 * `pol` must be a live handle; outputs must be valid pointers.
 */
enum FdStatus fd_policy_action(const struct FdPolicy *pol,
                               size_t state,
                               size_t j,
                               size_t *lo,
                               size_t *hi);

/**
 * Number of states of a policy.
 *
 * # Safety
 * `pol` must be a live handle and `out` a valid pointer.
 */
enum FdStatus fd_policy_state_count(const struct FdPolicy *pol, size_t *out);

/**
 * # Safety
 * `pol` must come from this library and not be freed twice.
 */
void fd_policy_free(struct FdPolicy *pol);

/**
 * Late-arrival rate `g` and fraction of late arrivals of a policy.
 *
 * # Safety
 * Handles must be live; outputs must be valid pointers.
 */
enum FdStatus fd_evaluate(const struct FdInstance *inst,
                          const struct FdPolicy *pol,
                          double *g,
                          double *flar_out);

/**
 * Discrete-event simulation of `incidents` arrivals.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
enum FdStatus fd_simulate(const struct FdInstance *inst,
                          const struct FdPolicy *pol,
                          uint64_t incidents,
                          uint64_t seed,
                          struct FdSimResult *out);

/**
 * `P(Y > t)` for `Y` Erlang with `w` unit-mean phases.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdStatus fd_erlang_tail(uint32_t w, double t, double *out);

/**
 * `P(min{Y1, Y2} > t)` for independent Erlang variables.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdStatus fd_min_tail(uint32_t w1, uint32_t w2, double t, double *out);

/**
 * `P(Y0 + min{Y1, Y2} > t)` for independent Erlang variables.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdStatus fd_sum_min_tail(uint32_t w0, uint32_t w1, uint32_t w2, double t, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIREDISPATCH_H */
