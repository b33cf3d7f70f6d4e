#ifndef ROBUSTNAV_H
#define ROBUSTNAV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum RnStatus {
  RN_STATUS_OK = 0,
  RN_STATUS_NULL_ARGUMENT = 1,
  RN_STATUS_INVALID_ARGUMENT = 2,
  RN_STATUS_PARSE = 3,
  RN_STATUS_GENERATION = 4,
  RN_STATUS_UNREACHABLE = 5,
  RN_STATUS_ILLEGAL_ACTION = 6,
  RN_STATUS_EPISODE_DONE = 7,
  RN_STATUS_NO_EPISODE = 8,
  RN_STATUS_BUFFER_TOO_SMALL = 9,
  RN_STATUS_IO = 10,
  RN_STATUS_INTERNAL = 11,
} RnStatus;

// Actions accepted by [`rn_env_step`].
typedef enum RnAction {
  RN_ACTION_MOVE_AHEAD = 0,
  RN_ACTION_ROTATE_LEFT = 1,
  RN_ACTION_ROTATE_RIGHT = 2,
  RN_ACTION_LOOK_UP = 3,
  RN_ACTION_LOOK_DOWN = 4,
  RN_ACTION_END = 5,
} RnAction;

// Opaque environment handle.
typedef struct RnEnv RnEnv;

// Opaque scene handle.
typedef struct RnScene RnScene;

// Result of one [`rn_env_step`].
typedef struct RnStepResult {
  double reward;
  bool done;
  bool success;
  bool failed_action;
  // Distance to the goal; NaN when the task has no gps_compass.
  double gps_r;
  // Bearing to the goal in degrees; NaN when absent.
  double gps_theta;
} RnStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rn_version(void);

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *rn_last_error(void);

// Generate a scene with default parameters.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum RnStatus rn_scene_generate(uint64_t seed, struct RnScene **out);

// Load a scene from its binary file contents.
//
// # Safety
// `bytes` must point to `len` readable bytes; `out` must be writable.
enum RnStatus rn_scene_load(const uint8_t *bytes, size_t len, struct RnScene **out);

// Serialize a scene. Release the buffer with [`rn_bytes_free`].
//
// # Safety
// `scene` must come from this library; `out_bytes` and `out_len` must be writable.
enum RnStatus rn_scene_save(const struct RnScene *scene, uint8_t **out_bytes, size_t *out_len);

// Grid dimensions and cell size of a scene.
//
// # Safety
// `scene` must come from this library; outputs must be writable.
enum RnStatus rn_scene_dims(const struct RnScene *scene,
                            size_t *width,
                            size_t *height,
                            double *cell_size);

// # Safety
// `scene` must come from this library or be null; it must not be used afterwards.
void rn_scene_free(struct RnScene *scene);

// Release a buffer returned by this library.
//
// # Safety
// `bytes` and `len` must come from the same call into this library.
void rn_bytes_free(uint8_t *bytes, size_t len);

// Geodesic distance between two points for the default agent radius.
//
// # Safety
// `scene` must come from this library; `out` must be writable.
enum RnStatus rn_geodesic_distance(const struct RnScene *scene,
                                   double x0,
                                   double y0,
                                   double x1,
                                   double y1,
                                   double *out);

// Create an environment over a scene. `config_toml` may be null for the
// defaults; otherwise it is an environment config in TOML.
//
// # Safety
// `scene` must come from this library; `config_toml` must be null or a
// NUL-terminated string; `out` must be writable.
enum RnStatus rn_env_new(const struct RnScene *scene, const char *config_toml, struct RnEnv **out);

// Start a PointNav episode from a start pose to a goal point.
//
// # Safety
// `env` must come from this library.
enum RnStatus rn_env_reset_pointnav(struct RnEnv *env,
                                    uint64_t seed,
                                    double start_x,
                                    double start_y,
                                    double start_heading,
                                    double goal_x,
                                    double goal_y);

// Apply one action.
//
// # Safety
// `env` must come from this library; `out` must be writable.
enum RnStatus rn_env_step(struct RnEnv *env, enum RnAction action, struct RnStepResult *out);

// Copy the latest observation into caller buffers.
//
// `rgb` needs `width * height * 3` bytes. `depth` may be null; otherwise it
// needs `width * height` floats and the sensor must include depth. Call with
// null buffers to query `width` and `height` only.
//
// # Safety
// Buffers must hold at least the stated capacities; `width` and `height`
// must be writable.
enum RnStatus rn_env_frame(const struct RnEnv *env,
                           size_t *width,
                           size_t *height,
                           uint8_t *rgb,
                           size_t rgb_cap,
                           float *depth,
                           size_t depth_cap);

// # Safety
// `env` must come from this library or be null; it must not be used afterwards.
void rn_env_free(struct RnEnv *env);

// Success weighted by path length.
//
// # Safety
// `out` must be writable.
enum RnStatus rn_spl(bool success, double l, double p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUSTNAV_H */
