#ifndef LAGAN_H
#define LAGAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LaganClass {
  LAGAN_CLASS_BACKGROUND = 0,
  LAGAN_CLASS_SIGNAL = 1,
} LaganClass;

typedef enum LaganPreset {
  LAGAN_PRESET_FULL = 0,
  LAGAN_PRESET_NARROW = 1,
  // Full sizes with shared-weight convolutions.
  LAGAN_PRESET_DCGAN = 2,
  LAGAN_PRESET_TOY = 3,
} LaganPreset;

typedef enum LaganStatus {
  LAGAN_STATUS_OK = 0,
  LAGAN_STATUS_NULL_POINTER = 1,
  LAGAN_STATUS_INVALID_ARGUMENT = 2,
  LAGAN_STATUS_NOT_FOUND = 3,
  // Wrong magic, version or a truncated file.
  LAGAN_STATUS_FORMAT = 4,
  LAGAN_STATUS_CONFIG = 5,
  LAGAN_STATUS_DIMENSION = 6,
  // Non-finite values or an observable that is undefined for the input.
  LAGAN_STATUS_NUMERIC = 7,
  LAGAN_STATUS_IO = 8,
  // A Rust panic was caught at the boundary.
  LAGAN_STATUS_PANIC = 9,
} LaganStatus;

// An ordered set of labeled 25x25 images.
typedef struct LaganImages LaganImages;

// A trained or freshly initialized generator/discriminator pair.
typedef struct LaganModel LaganModel;

// Observables of one 25x25 image. Undefined n-subjettiness values are NaN.
typedef struct LaganObservables {
  double pt;
  double mass;
  double tau1;
  double tau2;
  double tau21;
  // Set when the squared mass was negative and clamped to zero.
  bool mass_clamped;
} LaganObservables;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *lagan_version(void);

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *lagan_last_error(void);

// Initializes a model from a preset with the given seed.
//
// # Safety
// `out` must be valid for a pointer write.
enum LaganStatus lagan_model_new(enum LaganPreset preset, uint64_t seed, struct LaganModel **out);

// Loads a checkpoint written by `lagan train` or [`lagan_model_save`].
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for a pointer write.
enum LaganStatus lagan_model_load(const char *path, struct LaganModel **out);

// # Safety
// `model` must come from this library; `path` must be NUL-terminated.
enum LaganStatus lagan_model_save(const struct LaganModel *model, const char *path);

// # Safety
// `model` must be NULL or a handle from this library not yet freed.
void lagan_model_free(struct LaganModel *model);

// Side length of the images the model produces.
//
// # Safety
// `model` must come from this library; `out` must be writable.
enum LaganStatus lagan_model_image_size(const struct LaganModel *model, size_t *out);

// Generates `count` images of one class.
//
// # Safety
// `model` must come from this library; `out` must be writable.
enum LaganStatus lagan_model_generate(const struct LaganModel *model,
                                      enum LaganClass class_,
                                      size_t count,
                                      uint64_t seed,
                                      struct LaganImages **out);

// Inference-mode discriminator outputs for `count` images of
// `size * size` pixels each (GeV), row-major. Writes `count` values to each
// of `p_real` and `p_signal`.
//
// # Safety
// `pixels` must hold `count * size * size` doubles; the outputs `count` each.
enum LaganStatus lagan_model_discriminate(const struct LaganModel *model,
                                          const double *pixels,
                                          size_t count,
                                          double *p_real,
                                          double *p_signal);

// Synthetic, preprocessed images: `per_class` signal then `per_class`
// background.
//
// # Safety
// `out` must be writable.
enum LaganStatus lagan_images_synth(size_t per_class, uint64_t seed, struct LaganImages **out);

// # Safety
// `path` must be NUL-terminated; `out` writable.
enum LaganStatus lagan_images_read(const char *path, struct LaganImages **out);

// # Safety
// `images` must come from this library; `path` must be NUL-terminated.
enum LaganStatus lagan_images_write(const struct LaganImages *images, const char *path);

// # Safety
// `images` must come from this library; `out` writable.
enum LaganStatus lagan_images_len(const struct LaganImages *images, size_t *out);

// Copies image `index` into `pixels` (625 doubles, row = eta) and, when
// `class` is not NULL, stores its class.
//
// # Safety
// `pixels` must have room for 625 doubles.
enum LaganStatus lagan_images_get(const struct LaganImages *images,
                                  size_t index,
                                  double *pixels,
                                  enum LaganClass *class_);

// # Safety
// `images` must be NULL or a handle from this library not yet freed.
void lagan_images_free(struct LaganImages *images);

// Observables of one 625-pixel image.
//
// # Safety
// `pixels` must hold 625 doubles; `out` must be writable.
enum LaganStatus lagan_observables(const double *pixels, struct LaganObservables *out);

// Worst-case per-class EMD between the `(mass, tau21)` distributions of two
// image sets on their pooled window. When `emd` is not NULL it receives two
// values indexed by [`LaganClass`].
//
// # Safety
// Handles must come from this library; `emd` needs room for 2 doubles.
enum LaganStatus lagan_score(const struct LaganImages *real,
                             const struct LaganImages *generated,
                             double *sigma,
                             double *emd);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAGAN_H */
