#ifndef KANLAB_H
#define KANLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KanStatus {
  KAN_STATUS_OK = 0,
  KAN_STATUS_NULL_POINTER = 1,
  KAN_STATUS_INVALID_ARGUMENT = 2,
  KAN_STATUS_SHAPE = 3,
  KAN_STATUS_IO = 4,
  KAN_STATUS_CHECKPOINT = 5,
  KAN_STATUS_NUMERIC = 6,
  KAN_STATUS_PANIC = 7,
} KanStatus;

typedef enum KanModelKind {
  KAN_MODEL_KIND_SINE_KAN = 0,
  KAN_MODEL_KIND_FOURIER_KAN = 1,
  KAN_MODEL_KIND_B_SPLINE_KAN = 2,
  KAN_MODEL_KIND_MLP = 3,
} KanModelKind;

/**
 * Opaque model handle.
 */
typedef struct KanModel KanModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *kan_last_error(void);

/**
 * Builds a freshly initialised model. `kind` is a [`KanModelKind`] value.
 *
 * # Safety
 * `widths` must point to `n_widths` values and `out` must be writable.
 */
enum KanStatus kan_model_new(uint32_t kind,
                             const size_t *widths,
                             size_t n_widths,
                             size_t grid,
                             size_t order,
                             uint64_t seed,
                             struct KanModel **out);

/**
 * Loads a checkpoint written by [`kan_model_save`] or the CLI.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` must be writable.
 */
enum KanStatus kan_model_load(const char *path, struct KanModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum KanStatus kan_model_save(const struct KanModel *model, const char *path);

/**
 * Runs inference on `batch` row-major rows of `d_in` features, writing
 * `batch * d_out` values to `out`.
 *
 * # Safety
 * `x` must hold `x_len` values and `out` must hold `out_len` values.
 */
enum KanStatus kan_model_forward(const struct KanModel *model,
                                 const double *x,
                                 size_t x_len,
                                 size_t batch,
                                 double *out,
                                 size_t out_len);

/**
 * Input width, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t kan_model_d_in(const struct KanModel *model);

/**
 * Output width, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t kan_model_d_out(const struct KanModel *model);

/**
 * Number of layers, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t kan_model_num_layers(const struct KanModel *model);

/**
 * Trainable parameter count, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t kan_model_param_count(const struct KanModel *model);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void kan_model_free(struct KanModel *model);

/**
 * Modeled forward FLOPs of one layer. `order` is ignored except for
 * B-SplineKAN; `grid` is ignored for MLP.
 *
 * # Safety
 * `out` must be writable.
 */
enum KanStatus kan_layer_flops(uint32_t kind,
                               uint64_t batch,
                               uint64_t d_in,
                               uint64_t d_out,
                               uint64_t grid,
                               uint64_t order,
                               uint64_t *out);

/**
 * Phase scale ratio `R(g)` under the default constants.
 *
 * # Safety
 * `out` must be writable.
 */
enum KanStatus kan_scale_ratio(size_t g, double *out);

/**
 * Writes the `g` grid phases under the default constants.
 *
 * # Safety
 * `out` must hold `out_len` values.
 */
enum KanStatus kan_grid_phases(size_t g, double *out, size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KANLAB_H */
