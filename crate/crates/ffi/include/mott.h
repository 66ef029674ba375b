#ifndef MOTT_H
#define MOTT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MottStatus {
  MOTT_STATUS_OK = 0,
  MOTT_STATUS_NULL_POINTER = 1,
  MOTT_STATUS_INVALID_UTF8 = 2,
  MOTT_STATUS_OUT_OF_RANGE = 3,
  MOTT_STATUS_INVALID_PARAMETER = 4,
  MOTT_STATUS_INVALID_ARGUMENT = 5,
  MOTT_STATUS_INSUFFICIENT_DATA = 6,
  MOTT_STATUS_NUMERICAL = 7,
  MOTT_STATUS_STUCK_WALKER = 8,
  MOTT_STATUS_CAP_VIOLATION = 9,
  MOTT_STATUS_DENSITY_BOUND = 10,
  MOTT_STATUS_CONFIG = 11,
  MOTT_STATUS_IO = 12,
  MOTT_STATUS_PANIC = 13,
} MottStatus;

/**
 * Experiment configuration.
 */
typedef struct MottConfig MottConfig;

/**
 * Marked point configuration in a box.
 */
typedef struct MottEnv MottEnv;

/**
 * Mean-field hopping rates at a fixed inverse temperature.
 */
typedef struct MottRateModel MottRateModel;

/**
 * Finished experiment: tables, summary and outcome.
 */
typedef struct MottRun MottRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library on the same thread.
 */
const char *mott_last_error(void);

/**
 * Library version as a static string.
 */
const char *mott_version(void);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void mott_string_free(char *s);

/**
 * Default configuration of the named experiment (`mott-scan`, `perc-rc`,
 * `palm-check`, `domination-check` or `bound-compare`).
 *
 * # Safety
 * `experiment` must be a NUL-terminated string and `out` writable.
 */
enum MottStatus mott_config_new(const char *experiment, struct MottConfig **out);

/**
 * Parse and validate a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` writable.
 */
enum MottStatus mott_config_parse(const char *toml, struct MottConfig **out);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum MottStatus mott_config_set_seed(struct MottConfig *cfg, uint64_t seed);

/**
 * Number of environment replicas (or per-point replicas, depending on the
 * experiment).
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum MottStatus mott_config_set_replicas(struct MottConfig *cfg, size_t replicas);

/**
 * Effective configuration as TOML.
 *
 * # Safety
 * `cfg` must be a live handle and `out` writable.
 */
enum MottStatus mott_config_to_toml(const struct MottConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be NULL or a live handle; it is invalid afterwards.
 */
void mott_config_free(struct MottConfig *cfg);

/**
 * Run the configured experiment. Statistical rejections and invariant
 * violations are reported through [`mott_run_exit_code`], not the status.
 *
 * # Safety
 * `cfg` must be a live handle and `out` writable.
 */
enum MottStatus mott_run_experiment(const struct MottConfig *cfg, struct MottRun **out);

/**
 * 0 pass, 1 statistical rejection, 2 invariant violation; -1 for NULL.
 *
 * # Safety
 * `run` must be NULL or a live handle.
 */
int32_t mott_run_exit_code(const struct MottRun *run);

/**
 * Summary document as JSON.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum MottStatus mott_run_summary_json(const struct MottRun *run, char **out);

/**
 * Number of CSV tables; 0 for NULL.
 *
 * # Safety
 * `run` must be NULL or a live handle.
 */
size_t mott_run_table_count(const struct MottRun *run);

/**
 * File name and CSV text of table `index`.
 *
 * # Safety
 * `run` must be a live handle; `name` and `csv` must be writable.
 */
enum MottStatus mott_run_table(const struct MottRun *run, size_t index, char **name, char **csv);

/**
 * Write the tables and `summary.json` into `dir`, creating it if needed.
 *
 * # Safety
 * `run` must be a live handle and `dir` a NUL-terminated string.
 */
enum MottStatus mott_run_write(const struct MottRun *run, const char *dir);

/**
 * # Safety
 * `run` must be NULL or a live handle; it is invalid afterwards.
 */
void mott_run_free(struct MottRun *run);

/**
 * Palm version of the marked Poisson process on the periodic cube of side
 * `side`, marks with density proportional to `|E|^alpha` on `[-1, 1]`.
 * The origin is point 0.
 *
 * # Safety
 * `out` must be writable.
 */
enum MottStatus mott_env_palm_poisson(double rho,
                                      double side,
                                      size_t d,
                                      double alpha,
                                      uint64_t seed,
                                      struct MottEnv **out);

/**
 * Configuration from `n` points (`coords` holds `n * d` values, row-major)
 * and their marks, in a cube of side `side` centered at the origin.
 * `origin` is the index of the distinguished point, or -1 for none.
 *
 * # Safety
 * `coords` must hold `n * d` and `energies` `n` readable values; `out`
 * must be writable.
 */
enum MottStatus mott_env_from_arrays(const double *coords,
                                     const double *energies,
                                     size_t n,
                                     size_t d,
                                     double side,
                                     bool periodic,
                                     int64_t origin,
                                     struct MottEnv **out);

/**
 * Number of points; 0 for NULL.
 *
 * # Safety
 * `env` must be NULL or a live handle.
 */
size_t mott_env_len(const struct MottEnv *env);

/**
 * Dimension; 0 for NULL.
 *
 * # Safety
 * `env` must be NULL or a live handle.
 */
size_t mott_env_dim(const struct MottEnv *env);

/**
 * Coordinates (`dim` values into `coords`) and mark of point `i`.
 *
 * # Safety
 * `env` must be a live handle, `coords` must have room for `dim` values
 * and `energy` must be writable.
 */
enum MottStatus mott_env_point(const struct MottEnv *env, size_t i, double *coords, double *energy);

/**
 * # Safety
 * `env` must be NULL or a live handle; it is invalid afterwards.
 */
void mott_env_free(struct MottEnv *env);

/**
 * Mean-field rates `exp(-|x-y| - beta u(E_x, E_y))`, truncated at `r_cut`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MottStatus mott_rate_model_new(double beta, double r_cut, struct MottRateModel **out);

/**
 * # Safety
 * `model` must be NULL or a live handle; it is invalid afterwards.
 */
void mott_rate_model_free(struct MottRateModel *model);

/**
 * Jump rate from point `x` to point `y` (zero for `x == y`).
 *
 * # Safety
 * `model` and `env` must be live handles and `out` writable.
 */
enum MottStatus mott_rate(const struct MottRateModel *model,
                          const struct MottEnv *env,
                          size_t x,
                          size_t y,
                          double *out);

/**
 * Escape rate of point `x` over neighbours within the cutoff.
 *
 * # Safety
 * `model` and `env` must be live handles and `out` writable.
 */
enum MottStatus mott_escape_rate(const struct MottRateModel *model,
                                 const struct MottEnv *env,
                                 size_t x,
                                 double *out);

/**
 * `c1 beta^c2 exp(-c beta^((alpha+1)/(alpha+1+d)))`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MottStatus mott_closed_form_bound(double beta,
                                       double alpha,
                                       size_t d,
                                       double c1,
                                       double c2,
                                       double c,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOTT_H */
