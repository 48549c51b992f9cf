#ifndef CHAINSWARM_H
#define CHAINSWARM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_ARGUMENT = 1,
  CS_STATUS_INVALID_UTF8 = 2,
  CS_STATUS_INVALID_SCENARIO = 3,
  CS_STATUS_OUT_OF_RANGE = 4,
  CS_STATUS_BUFFER_TOO_SMALL = 5,
  CS_STATUS_PANIC = 6,
} CsStatus;

/**
 * Terminal state of a simulation.
 */
typedef enum CsRunState {
  CS_RUN_STATE_RUNNING = 0,
  CS_RUN_STATE_COMPLETE = 1,
  CS_RUN_STATE_INCOMPLETE = 2,
  CS_RUN_STATE_ABORTED = 3,
} CsRunState;

typedef enum CsZone {
  CS_ZONE_SAFE = 0,
  CS_ZONE_CRITICAL = 1,
  CS_ZONE_BREAK_AWAY = 2,
  CS_ZONE_OUT_OF_RANGE = 3,
} CsZone;

typedef enum CsRole {
  CS_ROLE_ROOT = 0,
  CS_ROLE_WORKER = 1,
  CS_ROLE_NETWORKER = 2,
  CS_ROLE_FREE = 3,
  CS_ROLE_FAILED = 4,
} CsRole;

/**
 * Opaque simulation handle.
 */
typedef struct CsSim CsSim;

/**
 * Snapshot of one robot. Absent chain/parent/child are -1.
 */
typedef struct CsRobot {
  uint32_t id;
  /**
   * 0 ground, 1 flying.
   */
  uint32_t kind;
  uint32_t role;
  double x;
  double y;
  double z;
  int64_t chain;
  int64_t parent;
  int64_t child;
} CsRobot;

/**
 * Run metrics. Absent completion tick is -1.
 */
typedef struct CsMetrics {
  uint64_t ticks;
  int64_t completion_tick;
  uint64_t messages;
  uint64_t violations;
  uint64_t heal_events;
  uint64_t failed;
  double max_link;
} CsMetrics;

/**
 * Radio thresholds for the link-model helpers.
 */
typedef struct CsRadio {
  double range;
  double near_field;
  double safe;
  double critical;
  double break_away;
} CsRadio;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Copies the calling thread's last error message. Never changes it.
 *
 * # Safety
 * `buf` must point to `len` writable bytes (or be null to query the size);
 * `needed` may be null.
 */
enum CsStatus cs_last_error(char *buf, size_t len, size_t *needed);

/**
 * Builds a simulation from scenario text. `base_dir` resolves relative
 * map paths and may be null (current directory). `seed` overrides the
 * scenario seed unless it is negative.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum CsStatus cs_sim_new(const char *scenario,
                         const char *base_dir,
                         int64_t seed,
                         struct CsSim **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from [`cs_sim_new`] and not be used afterwards.
 */
void cs_sim_free(struct CsSim *sim);

/**
 * Advances up to `ticks` ticks, stopping early at a terminal state.
 *
 * # Safety
 * `sim` must be a live handle; `state` may be null.
 */
enum CsStatus cs_sim_step(struct CsSim *sim, uint64_t ticks, enum CsRunState *state);

/**
 * Runs to a terminal state.
 *
 * # Safety
 * `sim` must be a live handle; `state` may be null.
 */
enum CsStatus cs_sim_run(struct CsSim *sim, enum CsRunState *state);

/**
 * Current tick; 0 for a null handle.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
uint64_t cs_sim_tick(const struct CsSim *sim);

/**
 * Number of robots; 0 for a null handle.
 *
 * # Safety
 * `sim` must be null or a live handle.
 */
size_t cs_sim_robot_count(const struct CsSim *sim);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum CsStatus cs_sim_robot(const struct CsSim *sim, size_t index, struct CsRobot *out);

/**
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum CsStatus cs_sim_metrics(const struct CsSim *sim, struct CsMetrics *out);

/**
 * Fails a robot immediately (it stops moving and transmitting).
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum CsStatus cs_sim_fail_robot(struct CsSim *sim, uint32_t id);

/**
 * Trajectory CSV recorded so far.
 *
 * # Safety
 * `sim` must be a live handle; buffer rules as in [`cs_last_error`].
 */
enum CsStatus cs_sim_trajectory_csv(const struct CsSim *sim, char *buf, size_t len, size_t *needed);

/**
 * Metrics CSV (header plus one row) for the current state.
 *
 * # Safety
 * `sim` must be a live handle; buffer rules as in [`cs_last_error`].
 */
enum CsStatus cs_sim_metrics_csv(const struct CsSim *sim, char *buf, size_t len, size_t *needed);

/**
 * Link quality at distance `d`; NaN for a null config.
 *
 * # Safety
 * `cfg` must be null or valid.
 */
double cs_link_quality(double d, const struct CsRadio *cfg);

/**
 * Distance zone at `d`.
 *
 * # Safety
 * `cfg` must be valid and `out` writable.
 */
enum CsStatus cs_classify_zone(double d, const struct CsRadio *cfg, enum CsZone *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINSWARM_H */
