#ifndef TDEVAL_H
#define TDEVAL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TdeAlgorithm {
  TDE_ALGORITHM_TD = 0,
  TDE_ALGORITHM_RESIDUAL_TD = 1,
  TDE_ALGORITHM_LSTD = 2,
  TDE_ALGORITHM_LSPE = 3,
  TDE_ALGORITHM_FGTD = 4,
  TDE_ALGORITHM_ILSTD = 5,
  TDE_ALGORITHM_EGD = 6,
} TdeAlgorithm;

typedef enum TdeSchedule {
  TDE_SCHEDULE_PER_TRAJECTORY = 0,
  TDE_SCHEDULE_PER_TRANSITION = 1,
  /**
   * Reduce every `every_k` transitions.
   */
  TDE_SCHEDULE_EVERY_K = 2,
} TdeSchedule;

typedef enum TdeStatus {
  TDE_STATUS_OK = 0,
  TDE_STATUS_NULL_POINTER = 1,
  TDE_STATUS_INVALID_ARGUMENT = 2,
  TDE_STATUS_DIMENSION_MISMATCH = 3,
  TDE_STATUS_SINGULAR_UPDATE = 4,
  TDE_STATUS_SINGULAR_SYSTEM = 5,
  TDE_STATUS_INVALID_CONFIG = 6,
  TDE_STATUS_IO = 7,
  TDE_STATUS_PANIC = 8,
} TdeStatus;

typedef enum TdeTraceMode {
  /**
   * The algorithm's own default.
   */
  TDE_TRACE_MODE_DEFAULT = 0,
  TDE_TRACE_MODE_FIXED_POINT = 1,
  TDE_TRACE_MODE_BELLMAN_RESIDUAL = 2,
} TdeTraceMode;

typedef struct TdeBoyanChain TdeBoyanChain;

typedef struct TdeEvaluator TdeEvaluator;

typedef struct TdeRng TdeRng;

/**
 * Plain-data description of an evaluator. Start from
 * [`tde_evaluator_config_default`] and override fields.
 */
typedef struct TdeEvaluatorConfig {
  enum TdeAlgorithm algorithm;
  enum TdeTraceMode mode;
  enum TdeSchedule schedule;
  size_t every_k;
  /**
   * Step size for TD, residual TD, FGTD and iLSTD.
   */
  double alpha;
  /**
   * Negative for a constant step; otherwise `α_t = α (c + 1) / (c + t)`.
   */
  double alpha_decay_c;
  /**
   * iLSTD coordinate updates per reduction.
   */
  size_t repeats;
  /**
   * EGD steps per reduction.
   */
  size_t egd_steps;
  double gamma;
  double lambda;
  double ridge;
  /**
   * TD-like algorithms only: skip maintaining `A` and `b`.
   */
  bool lean;
} TdeEvaluatorConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *tde_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tde_version(void);

/**
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum TdeStatus tde_boyan_new(size_t n_states, size_t feature_spacing, struct TdeBoyanChain **out);

/**
 * # Safety
 * `chain` must come from [`tde_boyan_new`] and not be used afterwards.
 */
void tde_boyan_free(struct TdeBoyanChain *chain);

/**
 * Number of features, or 0 for a null handle.
 *
 * # Safety
 * `chain` must be null or a live handle.
 */
size_t tde_boyan_n_features(const struct TdeBoyanChain *chain);

/**
 * Number of non-terminal states, or 0 for a null handle.
 *
 * # Safety
 * `chain` must be null or a live handle.
 */
size_t tde_boyan_n_states(const struct TdeBoyanChain *chain);

/**
 * Writes the features of `state` (0 is the terminal state) into `out`.
 *
 * # Safety
 * `out` must hold `len` doubles; `len` must equal the feature count.
 */
enum TdeStatus tde_boyan_features(const struct TdeBoyanChain *chain,
                                  size_t state,
                                  double *out,
                                  size_t len);

/**
 * Writes exact state values for states `0..=N` into `out` (`len = N + 1`).
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum TdeStatus tde_boyan_exact_values(const struct TdeBoyanChain *chain,
                                      double gamma,
                                      double *out,
                                      size_t len);

/**
 * RMSE over non-terminal states of the approximation `omega` against the
 * exact values at `gamma`.
 *
 * # Safety
 * `omega` must hold `len` doubles and `out` one double.
 */
enum TdeStatus tde_boyan_rmse(const struct TdeBoyanChain *chain,
                              const double *omega,
                              size_t len,
                              double gamma,
                              double *out);

/**
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum TdeStatus tde_rng_new(uint64_t seed, struct TdeRng **out);

/**
 * # Safety
 * `rng` must come from [`tde_rng_new`] and not be used afterwards.
 */
void tde_rng_free(struct TdeRng *rng);

/**
 * Defaults for `algorithm`: fixed-point mode (residual for residual TD),
 * per-trajectory reductions, constant `α = 0.1`, one iLSTD repeat, EGD
 * steps 1, `γ = 1`, `λ = 0`, ridge `1e-3`.
 */
struct TdeEvaluatorConfig tde_evaluator_config_default(enum TdeAlgorithm algorithm);

/**
 * Creates an evaluator over `dim` features with weights 0.
 *
 * # Safety
 * `config` must point to a valid config and `out` be writable.
 */
enum TdeStatus tde_evaluator_new(size_t dim,
                                 const struct TdeEvaluatorConfig *config,
                                 struct TdeEvaluator **out);

/**
 * # Safety
 * `ev` must come from [`tde_evaluator_new`] and not be used afterwards.
 */
void tde_evaluator_free(struct TdeEvaluator *ev);

/**
 * # Safety
 * `ev` must be a live handle.
 */
enum TdeStatus tde_evaluator_begin_trajectory(struct TdeEvaluator *ev);

/**
 * Feeds one transition; `phi_next` is all zeros for a terminal successor.
 * The temporal difference is written to `td_error` when it is non-null.
 *
 * # Safety
 * `phi_s` and `phi_next` must hold `len` doubles.
 */
enum TdeStatus tde_evaluator_observe(struct TdeEvaluator *ev,
                                     const double *phi_s,
                                     const double *phi_next,
                                     size_t len,
                                     double reward,
                                     double *td_error);

/**
 * # Safety
 * `ev` must be a live handle.
 */
enum TdeStatus tde_evaluator_end_trajectory(struct TdeEvaluator *ev);

/**
 * Forces a reduction now.
 *
 * # Safety
 * `ev` must be a live handle.
 */
enum TdeStatus tde_evaluator_reduce(struct TdeEvaluator *ev);

/**
 * Scales `μ` by `rho` in `[0, 1]`.
 *
 * # Safety
 * `ev` must be a live handle.
 */
enum TdeStatus tde_evaluator_mu_decay(struct TdeEvaluator *ev, double rho);

/**
 * Samples `count` episodes from the chain's top state and feeds each one
 * through the evaluator. The evaluator dimension must match the chain.
 *
 * # Safety
 * All handles must be live.
 */
enum TdeStatus tde_evaluator_run_episodes(struct TdeEvaluator *ev,
                                          const struct TdeBoyanChain *chain,
                                          struct TdeRng *rng,
                                          size_t count);

/**
 * Copies the weights into `out`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum TdeStatus tde_evaluator_weights(const struct TdeEvaluator *ev, double *out, size_t len);

/**
 * Replaces the weights; `μ` is recomputed from the accumulated model.
 *
 * # Safety
 * `omega` must hold `len` doubles.
 */
enum TdeStatus tde_evaluator_set_weights(struct TdeEvaluator *ev, const double *omega, size_t len);

/**
 * Copies the maintained gradient `μ` into `out`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum TdeStatus tde_evaluator_gradient(const struct TdeEvaluator *ev, double *out, size_t len);

/**
 * Cumulative multiply-accumulate count, or 0 for a null handle.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
uint64_t tde_evaluator_macs(const struct TdeEvaluator *ev);

/**
 * Transitions observed so far, or 0 for a null handle.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
uint64_t tde_evaluator_transitions(const struct TdeEvaluator *ev);

/**
 * Runs the experiment described by the JSON `config` and writes its CSV
 * and SVG files into `out_dir` (NULL uses the config's output directory).
 *
 * # Safety
 * `config` must be a NUL-terminated string; `out_dir` NULL or one.
 */
enum TdeStatus tde_run_experiment_json(const char *config, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TDEVAL_H */
