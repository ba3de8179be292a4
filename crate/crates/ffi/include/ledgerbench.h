#ifndef LEDGERBENCH_H
#define LEDGERBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LbStatus {
  LB_STATUS_OK = 0,
  LB_STATUS_NULL_ARGUMENT = 1,
  LB_STATUS_INVALID_UTF8 = 2,
  LB_STATUS_CONFIG = 3,
  LB_STATUS_RUN = 4,
  LB_STATUS_NOT_FOUND = 5,
  LB_STATUS_IO = 6,
  LB_STATUS_PANIC = 7,
} LbStatus;

/**
 * Live cluster answering JSON requests.
 */
typedef struct LbCluster LbCluster;

/**
 * Outcome of a finished run.
 */
typedef struct LbResult LbResult;

/**
 * Parsed scenario.
 */
typedef struct LbScenario LbScenario;

/**
 * Static description of a status code.
 */
const char *lb_status_str(enum LbStatus status);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *lb_last_error(void);

const char *lb_version(void);

/**
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum LbStatus lb_scenario_from_json(const char *json, struct LbScenario **out);

/**
 * Load a scenario shipped with the library by name.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum LbStatus lb_scenario_bundled(const char *name, struct LbScenario **out);

/**
 * Override the scenario's run seed for subsequent runs.
 *
 * # Safety
 * `scenario` must be a handle from this library or null.
 */
enum LbStatus lb_scenario_set_seed(struct LbScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must be a handle from this library or null; it must not be used afterwards.
 */
void lb_scenario_free(struct LbScenario *scenario);

/**
 * Run a scenario to completion in virtual time. `out_dir` may be null to
 * skip writing result files.
 *
 * # Safety
 * `scenario` must be a live handle, `out_dir` null or a valid string, and
 * `out` a valid pointer.
 */
enum LbStatus lb_run(const struct LbScenario *scenario, const char *out_dir, struct LbResult **out);

/**
 * Successful transactions per second; NaN on a null handle.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
double lb_result_throughput(const struct LbResult *result);

/**
 * Main-branch blocks over all blocks; NaN on a null handle.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
double lb_result_fork_ratio(const struct LbResult *result);

/**
 * Median latency in seconds; NaN on a null handle.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
double lb_result_latency_p50(const struct LbResult *result);

/**
 * The run summary as JSON, in the same shape as `summary.json`. Free the
 * string with [`lb_string_free`].
 *
 * # Safety
 * `result` must be a live handle and `out` a valid pointer.
 */
enum LbStatus lb_result_summary_json(const struct LbResult *result, char **out);

/**
 * # Safety
 * `result` must be a handle from this library or null; it must not be used afterwards.
 */
void lb_result_free(struct LbResult *result);

/**
 * Start the scenario's cluster at tick 0 without running a workload.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum LbStatus lb_cluster_new(const struct LbScenario *scenario, struct LbCluster **out);

/**
 * Handle one JSON request (`{"method": ...}`) and return the JSON response.
 * Request-level failures come back as `{"error": ...}` with status Ok.
 *
 * # Safety
 * `cluster` must be a live handle, `request` a valid string, `response` a valid pointer.
 */
enum LbStatus lb_cluster_request(struct LbCluster *cluster, const char *request, char **response);

/**
 * # Safety
 * `cluster` must be a handle from this library or null; it must not be used afterwards.
 */
void lb_cluster_free(struct LbCluster *cluster);

/**
 * # Safety
 * `s` must be a string returned by this library or null.
 */
void lb_string_free(char *s);

#endif  /* LEDGERBENCH_H */
