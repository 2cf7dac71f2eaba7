/* C interface to the conditionally studentized specification test. */

#ifndef COST_H
#define COST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CostStatus {
  /**
   * The call succeeded.
   */
  CostStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  CostStatus_NullPointer = 1,
  /**
   * An argument value was out of range or internally inconsistent.
   */
  CostStatus_InvalidArgument = 2,
  /**
   * The model or options were misconfigured.
   */
  CostStatus_ConfigError = 3,
  /**
   * The data was malformed (sizes, non-finite values).
   */
  CostStatus_DataError = 4,
  /**
   * A numerical procedure failed to produce a finite answer.
   */
  CostStatus_NumericError = 5,
  /**
   * The conditional variance estimate was numerically zero.
   */
  CostStatus_DegenerateVariance = 6,
  /**
   * The gradient Gram matrix could not be inverted.
   */
  CostStatus_SingularMatrix = 7,
  /**
   * Fewer observations than parameters somewhere.
   */
  CostStatus_Underdetermined = 8,
  /**
   * An internal invariant broke (a caught panic).
   */
  CostStatus_InternalError = 9,
} CostStatus;

/**
 * Weight function linking residual pairs.
 */
typedef enum CostWeightKind {
  /**
   * 1/√(‖x−x′‖² + 1).
   */
  CostWeightKind_InverseSqrt = 0,
  /**
   * exp(−‖x−x′‖²/2).
   */
  CostWeightKind_Gaussian = 1,
  /**
   * Coordinate-summed Gaussian kernel at bandwidth h = c·n^(−1/5).
   */
  CostWeightKind_KernelSum = 2,
  /**
   * Average of the inverse-square-root and kernel-sum weights.
   */
  CostWeightKind_Hybrid = 3,
} CostWeightKind;

/**
 * How rows are assigned to the two subsamples.
 */
typedef enum CostSplitMode {
  /**
   * Seeded pseudo-random assignment (reproducible).
   */
  CostSplitMode_SeededShuffle = 0,
  /**
   * First n1 rows form N1, the rest N2.
   */
  CostSplitMode_AsOrdered = 1,
} CostSplitMode;

/**
 * Opaque dataset handle.
 */
typedef struct CostDataset CostDataset;

/**
 * Opaque model handle.
 */
typedef struct CostModel CostModel;

/**
 * Options for [`cost_run_test`]; obtain defaults from
 * [`cost_test_options_default`] and override selectively.
 */
typedef struct CostTestOptions {
  enum CostWeightKind weight_kind;
  /**
   * Bandwidth constant c in h = c·n^(−1/5); must be positive.
   */
  double bandwidth_c;
  /**
   * Divide the kernel sum by q: 1 = yes, 0 = no, −1 = the kind's default.
   */
  int32_t normalize_by_q;
  /**
   * Fraction of rows assigned to N2, strictly between 0 and 1.
   */
  double split_fraction_n2;
  enum CostSplitMode split_mode;
  /**
   * Seed for the shuffle assignment (ignored for as-ordered splits).
   */
  uint64_t split_seed;
  /**
   * Iteration budget for each least-squares fit.
   */
  size_t max_iterations;
  /**
   * Stop when the loss improves by less than this relative amount.
   */
  double loss_tolerance;
  /**
   * Stop when the step is this small relative to the parameter norm.
   */
  double step_tolerance;
  /**
   * Extra random starts per fit (0 = single start at the origin).
   */
  size_t restarts;
  /**
   * Seed for the random starts.
   */
  uint64_t restart_seed;
} CostTestOptions;

/**
 * Scalar summary of one test run.
 */
typedef struct CostTestResult {
  /**
   * The studentized statistic.
   */
  double statistic;
  /**
   * Cross-sample U-statistic numerator.
   */
  double numerator;
  /**
   * Conditional standard-deviation estimate.
   */
  double conditional_sd;
  double p_value_two_sided;
  double p_value_one_sided;
  /**
   * Bandwidth h fed to the weight function.
   */
  double bandwidth;
  /**
   * Size of the first subsample.
   */
  size_t n1;
  /**
   * Size of the second subsample.
   */
  size_t n2;
  /**
   * Whether all three least-squares fits converged in budget.
   */
  bool converged;
} CostTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the library version as a static nul-terminated string.
 */
const char *cost_version(void);

/**
 * Copies the message of the most recent failure on this thread into
 * `buf` (nul-terminated, truncated to `cap` bytes including the nul) and
 * returns the full message length in bytes, excluding the nul. Query the
 * required capacity by passing a null `buf`.
 *
 * # Safety
 * `buf` must be null or point to at least `cap` writable bytes.
 */
size_t cost_last_error_message(char *buf, size_t cap);

/**
 * Builds a dataset from a row-major n×q predictor buffer and n responses.
 * On success stores a heap-allocated handle in `out`; release it with
 * [`cost_dataset_free`].
 *
 * # Safety
 * `predictors` must point to n·q readable doubles, `responses` to n, and
 * `out` must be a valid destination pointer.
 */
enum CostStatus cost_dataset_new(const double *predictors,
                                 size_t n,
                                 size_t q,
                                 const double *responses,
                                 struct CostDataset **out);

/**
 * Releases a dataset handle. Null is a no-op.
 *
 * # Safety
 * `ds` must be a pointer previously returned by [`cost_dataset_new`]
 * (or null) and must not be used afterwards.
 */
void cost_dataset_free(struct CostDataset *ds);

/**
 * Instantiates a model family by its identifier (e.g. `"linear"`,
 * `"single_index_cosine"`, `"block_product_sine"`) for q predictors.
 * `p` supplies the parameter count for the block families and must be 0
 * elsewhere. `beta` (nullable) supplies the q fixed direction entries
 * required by `"fixed_direction_polynomial"`. Release the handle with
 * [`cost_model_free`].
 *
 * # Safety
 * `family` must be a nul-terminated string, `beta` null or q readable
 * doubles, and `out` a valid destination pointer.
 */
enum CostStatus cost_model_new(const char *family,
                               size_t q,
                               size_t p,
                               const double *beta,
                               struct CostModel **out);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be a pointer previously returned by [`cost_model_new`]
 * (or null) and must not be used afterwards.
 */
void cost_model_free(struct CostModel *model);

/**
 * Stores the model's parameter count in `out`.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum CostStatus cost_model_param_count(const struct CostModel *model, size_t *out);

/**
 * Fills `out` with the default options: hybrid weight with c = 1 and the
 * kind's kernel normalization, a seeded 25% shuffle split, and the
 * standard fit budget with no restarts.
 *
 * # Safety
 * `out` must be a valid destination pointer.
 */
enum CostStatus cost_test_options_default(struct CostTestOptions *out);

/**
 * Runs the specification test and fills `out` with the scalar summary.
 *
 * # Safety
 * All pointers must be valid for the duration of the call.
 */
enum CostStatus cost_run_test(const struct CostModel *model,
                              const struct CostDataset *data,
                              const struct CostTestOptions *opts,
                              struct CostTestResult *out);

/**
 * Computes the full-sample pairwise diagnostic (no splitting, no
 * p-value) and stores it in `out`.
 *
 * # Safety
 * All pointers must be valid for the duration of the call.
 */
enum CostStatus cost_un_statistic(const struct CostModel *model,
                                  const struct CostDataset *data,
                                  const struct CostTestOptions *opts,
                                  double *out);

/**
 * The asymptotic p-value for a statistic value: 2·(1 − Φ(|v|)) when
 * `two_sided`, 1 − Φ(v) otherwise.
 */
double cost_p_value(double statistic, bool two_sided);

/**
 * The bandwidth rule h = c·n^(−1/5). Returns NaN when c is not a
 * positive finite number or n is zero.
 */
double cost_bandwidth(double c, size_t n);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COST_H */
