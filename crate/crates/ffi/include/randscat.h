#ifndef RANDSCAT_H
#define RANDSCAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum RandscatStatus {
  RANDSCAT_STATUS_OK = 0,
  RANDSCAT_STATUS_NULL_POINTER = 1,
  RANDSCAT_STATUS_INVALID_ARGUMENT = 2,
  RANDSCAT_STATUS_INVALID_GRID = 3,
  RANDSCAT_STATUS_INVALID_SCENE = 4,
  RANDSCAT_STATUS_NON_FINITE = 5,
  RANDSCAT_STATUS_GRID_MISMATCH = 6,
  RANDSCAT_STATUS_BELOW_THRESHOLD = 7,
  RANDSCAT_STATUS_TRUNCATION = 8,
  RANDSCAT_STATUS_COVERAGE_GAP = 9,
  RANDSCAT_STATUS_MIXED_SEEDS = 10,
  RANDSCAT_STATUS_INSUFFICIENT_SEEDS = 11,
  RANDSCAT_STATUS_SMALLNESS_GATE = 12,
  RANDSCAT_STATUS_FIXED_POINT_DIVERGED = 13,
  RANDSCAT_STATUS_EIGEN_NOT_CONVERGED = 14,
  RANDSCAT_STATUS_FORMAT = 15,
  RANDSCAT_STATUS_CHECKSUM = 16,
  RANDSCAT_STATUS_CONFIG = 17,
  RANDSCAT_STATUS_IO = 18,
  RANDSCAT_STATUS_INDEX_OUT_OF_RANGE = 19,
  RANDSCAT_STATUS_PANIC = 20,
} RandscatStatus;

/**
 * A far-field dataset read from disk.
 */
typedef struct RandscatDataset RandscatDataset;

/**
 * A forward model bound to a scene, with default solver settings.
 */
typedef struct RandscatModel RandscatModel;

/**
 * A medium: grid, noise amplitude, potential and source.
 */
typedef struct RandscatScene RandscatScene;

/**
 * One dataset record. `has_d` / `has_seed` mark the optional fields.
 */
typedef struct RandscatRecord {
  double k;
  double xhat[3];
  double d[3];
  bool has_d;
  uint64_t seed;
  bool has_seed;
  double re;
  double im;
} RandscatRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *randscat_version(void);

/**
 * Length in bytes of the last error message on this thread, excluding the
 * terminator; 0 when the last call succeeded.
 */
size_t randscat_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `cap`). Returns the number of bytes written excluding the terminator.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes or null.
 */
size_t randscat_last_error_message(char *buf, size_t cap);

/**
 * Loads a scene manifest and its volumes.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RandscatStatus randscat_scene_load(const char *path, struct RandscatScene **out);

/**
 * Builds a scene from voxel arrays of length `n[0]·n[1]·n[2]` in
 * x-fastest order. Any of the three arrays may be null for zero.
 *
 * # Safety
 * Non-null arrays must hold `len` values; `origin`, `extent` hold 3 and
 * `n` holds 3.
 */
enum RandscatStatus randscat_scene_new(const double *origin,
                                       const double *extent,
                                       const size_t *n,
                                       const double *sigma,
                                       const double *potential,
                                       const double *source,
                                       size_t len,
                                       struct RandscatScene **out);

/**
 * Number of voxels in the scene grid.
 *
 * # Safety
 * `scene` must come from this library; `out` must be writable.
 */
enum RandscatStatus randscat_scene_len(const struct RandscatScene *scene, size_t *out);

/**
 * Writes the scene manifest and its volumes.
 *
 * # Safety
 * `scene` must come from this library; `path` must be NUL-terminated.
 */
enum RandscatStatus randscat_scene_save(const struct RandscatScene *scene, const char *path);

/**
 * # Safety
 * `scene` must come from this library and not be used afterwards.
 */
void randscat_scene_free(struct RandscatScene *scene);

/**
 * A forward model for `scene` with default solver settings. The scene
 * handle stays owned by the caller.
 *
 * # Safety
 * `scene` must come from this library; `out` must be writable.
 */
enum RandscatStatus randscat_model_new(const struct RandscatScene *scene,
                                       struct RandscatModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void randscat_model_free(struct RandscatModel *model);

/**
 * Far-field pattern at `(k, xhat)`. `d` null gives a passive measurement;
 * `has_seed` false gives a noise-free one.
 *
 * # Safety
 * `model` must come from this library; `xhat` (and `d` when non-null)
 * hold 3 values; `re`, `im` must be writable.
 */
enum RandscatStatus randscat_far_field(const struct RandscatModel *model,
                                       double k,
                                       const double *xhat,
                                       const double *d,
                                       bool has_seed,
                                       uint64_t seed,
                                       double *re,
                                       double *im);

/**
 * Reads a far-field dataset file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum RandscatStatus randscat_dataset_read(const char *path, struct RandscatDataset **out);

/**
 * # Safety
 * `data` must come from this library; `out` must be writable.
 */
enum RandscatStatus randscat_dataset_len(const struct RandscatDataset *data, size_t *out);

/**
 * Copies record `index` (dataset order) into `out`.
 *
 * # Safety
 * `data` must come from this library; `out` must be writable.
 */
enum RandscatStatus randscat_dataset_record(const struct RandscatDataset *data,
                                            size_t index,
                                            struct RandscatRecord *out);

/**
 * # Safety
 * `data` must come from this library and not be used afterwards.
 */
void randscat_dataset_free(struct RandscatDataset *data);

/**
 * Runs (or resumes) the experiment in `config_path`, writing into
 * `out_dir`. `flags`, when non-null, receives the number of diagnostic
 * flags raised by the recovery.
 *
 * # Safety
 * Strings must be NUL-terminated; `flags` must be writable or null.
 */
enum RandscatStatus randscat_run_pipeline(const char *config_path,
                                          const char *out_dir,
                                          uint32_t *flags);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANDSCAT_H */
