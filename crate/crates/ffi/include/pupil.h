#ifndef PUPIL_H
#define PUPIL_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PupilStatus {
  PUPIL_STATUS_OK = 0,
  PUPIL_STATUS_NULL_POINTER = 1,
  PUPIL_STATUS_INVALID_ARGUMENT = 2,
  PUPIL_STATUS_IO = 3,
  PUPIL_STATUS_PARSE = 4,
  PUPIL_STATUS_INTERNAL = 5,
  PUPIL_STATUS_PANIC = 6,
} PupilStatus;

typedef enum PupilStage {
  PUPIL_STAGE_NONE = 0,
  PUPIL_STAGE_EDGE = 1,
  PUPIL_STAGE_MSER = 2,
} PupilStage;

/**
 * Opaque tracker handle.
 */
typedef struct PupilTracker PupilTracker;

/**
 * Result of one frame. `x`, `y` are in input image pixels and only
 * meaningful when `found` is non-zero.
 */
typedef struct PupilDetection {
  int32_t found;
  double x;
  double y;
  double confidence;
  enum PupilStage stage;
  int32_t used_roi;
  double elapsed_ms;
} PupilDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Tracker with the default configuration. Never returns null.
 */
struct PupilTracker *pupil_tracker_new(void);

/**
 * Tracker configured from a `key = value` file. On success `*out` receives
 * a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum PupilStatus pupil_tracker_new_from_config(const char *path, struct PupilTracker **out);

/**
 * Releases a tracker. Null is ignored.
 *
 * # Safety
 * `tracker` must come from this library and not be used afterwards.
 */
void pupil_tracker_free(struct PupilTracker *tracker);

/**
 * Forgets the previous detection so the next frame is searched in full.
 *
 * # Safety
 * `tracker` must be a live handle.
 */
enum PupilStatus pupil_tracker_reset(struct PupilTracker *tracker);

/**
 * Enables (non-zero) or disables ROI tracking.
 *
 * # Safety
 * `tracker` must be a live handle.
 */
enum PupilStatus pupil_tracker_set_tracking(struct PupilTracker *tracker, int32_t enabled);

/**
 * Detects the pupil in an 8-bit grayscale frame of `height` rows, each
 * `stride` bytes apart.
 *
 * # Safety
 * `tracker` must be a live handle, `data` must point to at least
 * `stride * height` readable bytes and `out` must be writable.
 */
enum PupilStatus pupil_tracker_detect(struct PupilTracker *tracker,
                                      const uint8_t *data,
                                      size_t width,
                                      size_t height,
                                      size_t stride,
                                      struct PupilDetection *out);

/**
 * Message for the last failed call on this thread, or null if the last call
 * succeeded. The pointer stays valid until the next call into the library on
 * the same thread.
 */
const char *pupil_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *pupil_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PUPIL_H */
