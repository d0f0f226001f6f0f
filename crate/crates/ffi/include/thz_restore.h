#ifndef THZ_RESTORE_H
#define THZ_RESTORE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ThzStatus {
  THZ_STATUS_OK = 0,
  THZ_STATUS_FORMAT = 1,
  THZ_STATUS_CORRUPT = 2,
  THZ_STATUS_VALIDATION = 3,
  THZ_STATUS_CONFIG = 4,
  THZ_STATUS_DOMAIN = 5,
  THZ_STATUS_DIMENSION = 6,
  THZ_STATUS_RANGE = 7,
  THZ_STATUS_IO = 8,
  THZ_STATUS_NULL_POINTER = 9,
  THZ_STATUS_PANIC = 10,
} ThzStatus;

typedef enum ThzNoiseType {
  THZ_NOISE_TYPE_IID = 0,
  THZ_NOISE_TYPE_NONIID = 1,
  THZ_NOISE_TYPE_POISSON = 2,
} ThzNoiseType;

typedef enum ThzDeblur {
  THZ_DEBLUR_RICHARDSON_LUCY = 0,
  THZ_DEBLUR_WIENER = 1,
  THZ_DEBLUR_HYPER_LAPLACIAN = 2,
} ThzDeblur;

/**
 * Opaque cube handle.
 */
typedef struct ThzCube ThzCube;

/**
 * Restoration settings. Obtain defaults from `thz_restore_config_default`.
 */
typedef struct ThzRestoreConfig {
  /**
   * Subspace dimension; 0 selects it automatically.
   */
  size_t p;
  /**
   * A `ThzNoiseType` value.
   */
  uint32_t noise_type;
  /**
   * Poisson gain, used with `THZ_NOISE_TYPE_POISSON`.
   */
  double gain;
  /**
   * A `ThzDeblur` value.
   */
  uint32_t deblur;
  size_t rl_iterations;
  /**
   * Wiener noise-to-signal ratio; negative derives it from the noise level.
   */
  double wiener_nsr;
  double hl_lambda;
  double hl_alpha;
  size_t hl_outer_iterations;
  double f_number;
  /**
   * Defocus in mm.
   */
  double z;
  /**
   * PSF truncation in beam radii.
   */
  double truncation;
  size_t patch_size;
  size_t search_window;
  /**
   * Denoising strength `h / sigma`.
   */
  double strength;
  /**
   * Seed of the joint method's noise probe.
   */
  uint64_t seed;
} ThzRestoreConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *thz_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *thz_version(void);

/**
 * Builds a cube from `bands × height × width` samples (band-major, then
 * row-major) and `bands` frequencies in THz. The data is copied.
 *
 * # Safety
 * `frequencies` must point to `bands` doubles, `data` to
 * `bands * height * width` doubles, and `out` must be writable.
 */
enum ThzStatus thz_cube_new(size_t bands,
                            size_t height,
                            size_t width,
                            const double *frequencies,
                            double step_x,
                            double step_y,
                            const double *data,
                            struct ThzCube **out);

/**
 * Reads a cube container.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum ThzStatus thz_cube_read(const char *path, struct ThzCube **out);

/**
 * Writes a cube container.
 *
 * # Safety
 * `cube` must be a live handle and `path` a NUL-terminated string.
 */
enum ThzStatus thz_cube_write(const struct ThzCube *cube, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `cube` must come from this library and not be used afterwards.
 */
void thz_cube_free(struct ThzCube *cube);

/**
 * # Safety
 * `cube` must be a live handle; the out pointers must be writable.
 */
enum ThzStatus thz_cube_dims(const struct ThzCube *cube,
                             size_t *bands,
                             size_t *height,
                             size_t *width);

/**
 * Copies the samples into `out`, which must hold exactly
 * `bands * height * width` doubles (`len`).
 *
 * # Safety
 * `cube` must be a live handle and `out` must point to `len` doubles.
 */
enum ThzStatus thz_cube_data(const struct ThzCube *cube, double *out, size_t len);

/**
 * Copies the `bands` frequencies into `out`.
 *
 * # Safety
 * `cube` must be a live handle and `out` must point to `len` doubles.
 */
enum ThzStatus thz_cube_frequencies(const struct ThzCube *cube, double *out, size_t len);

/**
 * Beam waist radius w0 in mm at `frequency_thz` for focusing optics of the
 * given f-number.
 *
 * # Safety
 * `out` must be writable.
 */
enum ThzStatus thz_beam_waist(double frequency_thz, double f_number, double *out);

/**
 * Library defaults for `ThzRestoreConfig`.
 */
struct ThzRestoreConfig thz_restore_config_default(void);

/**
 * Subspace denoising. A null `config` is rejected.
 *
 * # Safety
 * `cube` must be a live handle, `config` valid and `out` writable.
 */
enum ThzStatus thz_fasthyde(const struct ThzCube *cube,
                            const struct ThzRestoreConfig *config,
                            struct ThzCube **out);

/**
 * Subspace denoising with per-component deconvolution.
 *
 * # Safety
 * `cube` must be a live handle, `config` valid and `out` writable.
 */
enum ThzStatus thz_joint_restore(const struct ThzCube *cube,
                                 const struct ThzRestoreConfig *config,
                                 struct ThzCube **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THZ_RESTORE_H */
