#ifndef SCALEDSM_H
#define SCALEDSM_H

/* Generated by cbindgen from scaledsm-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Iterative methods exposed through the C API.
 */
typedef enum SsmAlgorithm {
  SSM_ALGORITHM_SCALED_SM = 0,
  SSM_ALGORITHM_VANILLA_SM = 1,
  SSM_ALGORITHM_SCALED_GD = 2,
  SSM_ALGORITHM_GD = 3,
} SsmAlgorithm;

/**
 * Measurement ensembles exposed through the C API.
 */
typedef enum SsmOperatorKind {
  SSM_OPERATOR_KIND_MATRIX_SENSING = 0,
  SSM_OPERATOR_KIND_QUADRATIC_SAMPLING = 1,
} SsmOperatorKind;

/**
 * Terminal solver status.
 */
typedef enum SsmRunStatus {
  SSM_RUN_STATUS_CONVERGED = 0,
  SSM_RUN_STATUS_MAX_ITERS = 1,
  SSM_RUN_STATUS_STALLED = 2,
  SSM_RUN_STATUS_DIVERGED = 3,
} SsmRunStatus;

/**
 * Stepsize schedules exposed through the C API.
 */
typedef enum SsmSchedule {
  /**
   * `param1` is the optimal loss value (pass the planted noise norm, or a
   * negative value to use the oracle value on corrupted data).
   */
  SSM_SCHEDULE_POLYAK = 0,
  /**
   * `param1` is lambda, `param2` is q.
   */
  SSM_SCHEDULE_GEOMETRIC = 1,
  /**
   * `param1` is the constant stepsize.
   */
  SSM_SCHEDULE_CONSTANT = 2,
} SsmSchedule;

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum SsmStatus {
  SSM_STATUS_OK = 0,
  SSM_STATUS_NULL_POINTER = 1,
  SSM_STATUS_INVALID_ARGUMENT = 2,
  SSM_STATUS_NUMERICAL_FAILURE = 3,
  SSM_STATUS_IO_FAILURE = 4,
  SSM_STATUS_PANIC = 5,
} SsmStatus;

/**
 * Opaque problem instance: planted truth, operator, observations.
 */
typedef struct SsmProblem SsmProblem;

/**
 * Opaque finished run: the trace plus its terminal status.
 */
typedef struct SsmRun SsmRun;

/**
 * One solver trace row.
 */
typedef struct SsmTraceRow {
  uintptr_t iter;
  double fval;
  double eta;
  double rel_err;
  /**
   * NaN when the distance was not recorded.
   */
  double dist;
  uint64_t elapsed_ns;
} SsmTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ssm_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *ssm_version(void);

/**
 * Creates a synthetic recovery problem: planted rank-`r` ground truth with
 * condition number `kappa`, `m` measurements of the requested ensemble,
 * bounded noise of l1 budget `sigma_w`, and a `p_s` fraction of outliers.
 *
 * `use_dense_storage != 0` materializes the measurement data; otherwise rows
 * are regenerated from the seed on every pass.
 */
enum SsmStatus ssm_problem_create(enum SsmOperatorKind kind,
                                  uintptr_t n,
                                  uintptr_t r,
                                  double kappa,
                                  uintptr_t m,
                                  double sigma_w,
                                  double p_s,
                                  uint64_t seed,
                                  int32_t use_dense_storage,
                                  struct SsmProblem **out);

void ssm_problem_free(struct SsmProblem *problem);

/**
 * Number of measurements in the problem.
 */
uintptr_t ssm_problem_m(const struct SsmProblem *problem);

/**
 * Loss value at the planted matrix (`||w + s||_1`), the oracle Polyak target.
 */
double ssm_problem_oracle_fstar(const struct SsmProblem *problem);

/**
 * Runs a solver from the truncated spectral initialization.
 *
 * For `SsmSchedule::Polyak`, a negative `param1` requests the oracle optimal
 * value `||w + s||_1`; otherwise `param1` is used as `fstar`. For
 * `SsmSchedule::Geometric`, `param1` is lambda and `param2` is q. For
 * `SsmSchedule::Constant`, `param1` is the stepsize.
 */
enum SsmStatus ssm_solve(const struct SsmProblem *problem,
                         enum SsmAlgorithm algorithm,
                         enum SsmSchedule schedule,
                         double param1,
                         double param2,
                         uintptr_t max_iters,
                         double tol_rel_err,
                         int32_t record_dist,
                         struct SsmRun **out);

void ssm_run_free(struct SsmRun *run);

/**
 * Number of recorded trace rows.
 */
uintptr_t ssm_run_len(const struct SsmRun *run);

enum SsmRunStatus ssm_run_status(const struct SsmRun *run);

/**
 * Copies row `index` into `out`. Returns `InvalidArgument` when out of range.
 */
enum SsmStatus ssm_run_row(const struct SsmRun *run, uintptr_t index, struct SsmTraceRow *out);

/**
 * Final relative reconstruction error of the run.
 */
double ssm_run_final_rel_err(const struct SsmRun *run);

/**
 * First iteration at which the relative error reached `tol`, or -1.
 */
int64_t ssm_run_iters_to_tol(const struct SsmRun *run, double tol);

/**
 * Writes the trace as CSV (`iter,fval,eta,rel_err,dist,elapsed_ns`).
 *
 * `path` must be a NUL-terminated UTF-8 string.
 */
enum SsmStatus ssm_run_write_csv(const struct SsmRun *run, const char *path);

/**
 * Estimates the operator's mixed-norm RIP constants by randomized probing;
 * writes `delta1_hat <= delta2_hat` and (when outliers are planted) the
 * S-outlier bound into the out parameters. `delta3_out` may be null.
 */
enum SsmStatus ssm_problem_estimate_rip(const struct SsmProblem *problem,
                                        uintptr_t trials,
                                        double *delta1_out,
                                        double *delta2_out,
                                        double *delta3_out);

/**
 * Runs a full experiment config (TOML text) as the CLI `run` subcommand
 * would, writing traces and reports under `out_dir`.
 */
enum SsmStatus ssm_run_experiment(const char *config_toml, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCALEDSM_H */
