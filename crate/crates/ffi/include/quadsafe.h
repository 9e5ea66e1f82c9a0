#ifndef QUADSAFE_H
#define QUADSAFE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of columns of one inner-loop row, see [`qs_run_inner_row`].
 */
#define QS_INNER_COLUMNS 18

/**
 * Result code of every fallible call.
 */
typedef enum QsStatus {
  QS_STATUS_OK = 0,
  QS_STATUS_NULL_POINTER = 1,
  QS_STATUS_INVALID_UTF8 = 2,
  QS_STATUS_CONFIG = 3,
  QS_STATUS_INVALID_SCENARIO = 4,
  QS_STATUS_PARSE = 5,
  QS_STATUS_IO = 6,
  /**
   * The run stopped early; the handle is still produced.
   */
  QS_STATUS_SIMULATION_FAILED = 7,
  QS_STATUS_OUT_OF_RANGE = 8,
  QS_STATUS_PANIC = 9,
} QsStatus;

/**
 * Opaque handle to a finished run.
 */
typedef struct QsRun QsRun;

/**
 * Opaque scenario handle.
 */
typedef struct QsScenario QsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *qs_last_error(void);

/**
 * Library version as a static string.
 */
const char *qs_version(void);

/**
 * Loads one of the scenarios shipped with the library by name.
 *
 * # Safety
 * `name` must be a valid C string and `out` a valid pointer.
 */
enum QsStatus qs_scenario_bundled(const char *name, struct QsScenario **out);

/**
 * Parses and validates a scenario file.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum QsStatus qs_scenario_load(const char *path, struct QsScenario **out);

/**
 * Parses and validates scenario TOML text.
 *
 * # Safety
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum QsStatus qs_scenario_from_toml(const char *text, struct QsScenario **out);

/**
 * Selects the controller by name (`sdhocbf`, `hocbf_filter`, `mpc_dc`,
 * `dcbf`, `dhocbf`).
 *
 * # Safety
 * `scenario` must come from this library; `name` must be a valid C string.
 */
enum QsStatus qs_scenario_set_controller(struct QsScenario *scenario, const char *name);

/**
 * Sets the barrier gain and the discrete decay rate. The scenario is
 * revalidated and left unchanged on failure.
 *
 * # Safety
 * `scenario` must come from this library.
 */
enum QsStatus qs_scenario_set_gains(struct QsScenario *scenario, double p, double lambda);

/**
 * Sets the simulated duration in seconds.
 *
 * # Safety
 * `scenario` must come from this library.
 */
enum QsStatus qs_scenario_set_duration(struct QsScenario *scenario, double seconds);

/**
 * # Safety
 * `scenario` must come from this library or be null; it is invalid afterwards.
 */
void qs_scenario_free(struct QsScenario *scenario);

/**
 * Runs the closed loop. On `QS_STATUS_SIMULATION_FAILED` the partial run is
 * still returned through `out`.
 *
 * # Safety
 * `scenario` must come from this library and `out` be a valid pointer.
 */
enum QsStatus qs_run(const struct QsScenario *scenario, struct QsRun **out);

/**
 * Whether the run reached the end of the scenario.
 *
 * # Safety
 * `run` must come from this library.
 */
bool qs_run_completed(const struct QsRun *run);

/**
 * Number of inner-loop samples.
 *
 * # Safety
 * `run` must come from this library.
 */
size_t qs_run_inner_len(const struct QsRun *run);

/**
 * Copies inner sample `index` into `row` in the column order of `log.csv`:
 * `t, p, v, q (w, x, y, z), omega, f_z, tau`.
 *
 * # Safety
 * `run` must come from this library; `row` must hold [`QS_INNER_COLUMNS`] doubles.
 */
enum QsStatus qs_run_inner_row(const struct QsRun *run, size_t index, double *row);

/**
 * Run metrics as a JSON document; release with [`qs_string_free`].
 *
 * # Safety
 * `run` must come from this library.
 */
char *qs_run_metrics_json(const struct QsRun *run);

/**
 * Writes `log.csv`, `outer.csv` and `metrics.json` into `dir`.
 *
 * # Safety
 * `run` must come from this library; `dir` must be a valid C string.
 */
enum QsStatus qs_run_write(const struct QsRun *run, const char *dir);

/**
 * # Safety
 * `run` must come from this library or be null; it is invalid afterwards.
 */
void qs_run_free(struct QsRun *run);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void qs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUADSAFE_H */
