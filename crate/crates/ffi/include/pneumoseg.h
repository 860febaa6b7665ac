#ifndef PNEUMOSEG_H
#define PNEUMOSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PsegStatus {
  PSEG_STATUS_OK = 0,
  PSEG_STATUS_NULL_POINTER = 1,
  PSEG_STATUS_INVALID_ARGUMENT = 2,
  PSEG_STATUS_IO = 3,
  PSEG_STATUS_CHECKPOINT = 4,
  PSEG_STATUS_IMAGE = 5,
  PSEG_STATUS_RLE = 6,
  PSEG_STATUS_MODEL = 7,
  PSEG_STATUS_INTERNAL = 8,
} PsegStatus;

/**
 * Opaque model handle.
 */
typedef struct PsegModel PsegModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread; empty after success.
 * The pointer stays valid until the next call on this thread.
 */
const char *pseg_last_error(void);

/**
 * Static, NUL-terminated crate version.
 */
const char *pseg_version(void);

/**
 * Loads a checkpoint from memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum PsegStatus pseg_model_load_bytes(const uint8_t *data, size_t len, struct PsegModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PsegStatus pseg_model_load_file(const char *path, struct PsegModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from a load function and not be used afterwards.
 */
void pseg_model_free(struct PsegModel *model);

/**
 * Side length of the square model input.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum PsegStatus pseg_model_image_size(const struct PsegModel *model, size_t *out);

/**
 * Segments a PNG image; writes the mask RLE at model resolution.
 *
 * # Safety
 * `model` must be a live handle, `png` must point to `len` bytes and
 * `out_rle` must be writable.
 */
enum PsegStatus pseg_predict_png(const struct PsegModel *model,
                                 const uint8_t *png,
                                 size_t len,
                                 float theta,
                                 size_t min_area,
                                 char **out_rle);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void pseg_string_free(char *s);

/**
 * Canonical RLE of a row-major mask.
 *
 * # Safety
 * `mask_data` must point to `width * height` bytes; `out` must be writable.
 */
enum PsegStatus pseg_rle_encode(const uint8_t *mask_data, size_t width, size_t height, char **out);

/**
 * Decodes into a caller-owned buffer of `width * height` bytes (0 or 1).
 *
 * # Safety
 * `rle_text` must be NUL-terminated; `out_mask` must hold
 * `width * height` writable bytes.
 */
enum PsegStatus pseg_rle_decode(const char *rle_text,
                                size_t width,
                                size_t height,
                                uint8_t *out_mask);

/**
 * # Safety
 * `rle_text` must be NUL-terminated; `out` must be writable.
 */
enum PsegStatus pseg_rle_canonicalize(const char *rle_text,
                                      size_t width,
                                      size_t height,
                                      char **out);

/**
 * Dice coefficient of two masks; 1.0 when both are empty.
 *
 * # Safety
 * `a` and `b` must each point to `width * height` bytes; `out` writable.
 */
enum PsegStatus pseg_dice(const uint8_t *a,
                          const uint8_t *b,
                          size_t width,
                          size_t height,
                          float *out);

/**
 * Intersection over union of two masks; 1.0 when both are empty.
 *
 * # Safety
 * `a` and `b` must each point to `width * height` bytes; `out` writable.
 */
enum PsegStatus pseg_iou(const uint8_t *a,
                         const uint8_t *b,
                         size_t width,
                         size_t height,
                         float *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PNEUMOSEG_H */
