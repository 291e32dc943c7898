#ifndef LAPKIT_H
#define LAPKIT_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum LapkitStatus {
  LAPKIT_STATUS_OK = 0,
  LAPKIT_STATUS_NULL_POINTER = 1,
  LAPKIT_STATUS_INVALID_ARGUMENT = 2,
  LAPKIT_STATUS_INVALID_CONFIG = 3,
  LAPKIT_STATUS_NOT_READY = 4,
  LAPKIT_STATUS_ACTION_SHAPE = 5,
  LAPKIT_STATUS_BUFFER_TOO_SMALL = 6,
  LAPKIT_STATUS_INTERNAL = 7,
  LAPKIT_STATUS_PANIC = 8,
} LapkitStatus;

/**
 * Opaque environment handle.
 */
typedef struct LapkitEnv LapkitEnv;

/**
 * Scalar results of one step.
 */
typedef struct LapkitStepOutput {
  double reward;
  bool terminated;
  bool truncated;
  bool success;
  bool failure;
} LapkitStepOutput;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread. Valid until the next lapkit call.
 */
const char *lapkit_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lapkit_version(void);

/**
 * Creates an environment.
 *
 * `config_json` may be null for defaults or hold a JSON overlay of the
 * environment config.
 *
 * # Safety
 * `env_id` and a non-null `config_json` must be NUL-terminated strings;
 * `out` must be writable.
 */
enum LapkitStatus lapkit_env_new(const char *env_id,
                                 const char *config_json,
                                 struct LapkitEnv **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `env` must come from [`lapkit_env_new`] and not have been freed.
 */
void lapkit_env_free(struct LapkitEnv *env);

/**
 * Number of values the `action` array of [`lapkit_env_step`] must hold.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum LapkitStatus lapkit_env_action_len(const struct LapkitEnv *env, size_t *out);

/**
 * Dimension of the continuous action space.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum LapkitStatus lapkit_env_action_dim(const struct LapkitEnv *env, size_t *out);

/**
 * Number of values in one observation.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum LapkitStatus lapkit_env_obs_len(const struct LapkitEnv *env, size_t *out);

/**
 * Resets the episode and writes the first observation into `obs`.
 *
 * `obs_len` receives the observation length even when the buffer is too small.
 *
 * # Safety
 * `env` must be a live handle; `obs` must hold `obs_capacity` doubles;
 * `obs_len` may be null.
 */
enum LapkitStatus lapkit_env_reset(struct LapkitEnv *env,
                                   uint64_t seed,
                                   double *obs,
                                   size_t obs_capacity,
                                   size_t *obs_len);

/**
 * Advances one agent step.
 *
 * # Safety
 * `env` must be a live handle; `action` must hold `action_len` doubles;
 * `obs` must hold `obs_capacity` doubles; `obs_len` and `result` may be null.
 */
enum LapkitStatus lapkit_env_step(struct LapkitEnv *env,
                                  const double *action,
                                  size_t action_len,
                                  double *obs,
                                  size_t obs_capacity,
                                  size_t *obs_len,
                                  struct LapkitStepOutput *result);

/**
 * Maps a TPSD state (degrees, mm) through an RCM frame to a pose
 * `[x, y, z, qx, qy, qz, qw]`.
 *
 * # Safety
 * `ptsd` must hold 4 doubles, `rcm_position` and `rcm_orientation` 3 each,
 * and `pose_out` must have room for 7.
 */
enum LapkitStatus lapkit_ptsd_to_pose(const double *ptsd,
                                      const double *rcm_position,
                                      const double *rcm_orientation,
                                      double *pose_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAPKIT_H */
