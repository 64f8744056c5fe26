#ifndef PIPN_H
#define PIPN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum PipnStatus {
  PIPN_STATUS_OK = 0,
  PIPN_STATUS_NULL_POINTER = 1,
  PIPN_STATUS_INVALID_ARGUMENT = 2,
  PIPN_STATUS_IO = 3,
  PIPN_STATUS_FORMAT = 4,
  PIPN_STATUS_FAILED = 5,
  PIPN_STATUS_PANIC = 6,
} PipnStatus;

typedef enum PipnPooling {
  PIPN_POOLING_MAX = 0,
  PIPN_POOLING_AVERAGE = 1,
} PipnPooling;

typedef enum PipnSchedule {
  PIPN_SCHEDULE_CONSTANT_EQUAL = 0,
  PIPN_SCHEDULE_CONSTANT_HIGH = 1,
  PIPN_SCHEDULE_EXP_DECAY = 2,
  PIPN_SCHEDULE_LOG_DECAY = 3,
} PipnSchedule;

// Opaque model handle: network weights with optimizer state, as stored in
// a checkpoint.
typedef struct PipnModel PipnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *pipn_last_error(void);

// Builds a freshly initialized model.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum PipnStatus pipn_model_build(double n_s,
                                 enum PipnPooling pooling,
                                 uint64_t seed,
                                 struct PipnModel **out);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PipnStatus pipn_model_load(const char *path, struct PipnModel **out);

// Writes the model as a checkpoint file.
//
// # Safety
// `model` must come from this library and `path` be NUL-terminated.
enum PipnStatus pipn_model_save(const struct PipnModel *model, const char *path);

// Releases a handle; null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void pipn_model_free(struct PipnModel *model);

// Number of trainable parameters.
//
// # Safety
// `model` must come from this library and `out` be a valid pointer.
enum PipnStatus pipn_model_param_count(const struct PipnModel *model, uint64_t *out);

// Predicts `(u, v)` at `n_points` points. `xy` holds `x0, y0, x1, y1, ...`
// and `uv_out` receives `u0, v0, u1, v1, ...`; both have `2 * n_points`
// entries.
//
// # Safety
// The arrays must be valid for `2 * n_points` doubles.
enum PipnStatus pipn_model_predict(const struct PipnModel *model,
                                   const double *xy,
                                   size_t n_points,
                                   double *uv_out);

// Sensor-loss weight of a schedule at `epoch`. `omega` and `r` are the
// schedule's weight and rate; both are ignored by `ConstantEqual` and `r`
// by `ConstantHigh`.
//
// # Safety
// `out` must be a valid pointer.
enum PipnStatus pipn_weight_sensor(enum PipnSchedule kind,
                                   double omega,
                                   double r,
                                   uint64_t epoch,
                                   double *out);

// Generates a dataset as `pipn gen-data` does. `config_path` may be null
// for the default config; `out_dir` and `filter` override it when not
// null. `generated` receives the number of geometries written.
//
// # Safety
// Non-null strings must be NUL-terminated; `generated` may be null.
enum PipnStatus pipn_generate_dataset(const char *config_path,
                                      const char *out_dir,
                                      const char *filter,
                                      uint64_t seed,
                                      size_t *generated);

// Library version as a static NUL-terminated string.
const char *pipn_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PIPN_H */
