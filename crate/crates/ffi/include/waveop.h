/* C interface of the waveop operator-learning toolkit. */

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes: 0 success; 1 null pointer or invalid UTF-8; 2 argument or
 * configuration errors; 3 I/O and file-format errors; 4 numerical failures.
 */
#define WAVEOP_OK 0

#define WAVEOP_ERR_NULL 1

#define WAVEOP_ERR_ARGUMENT 2

#define WAVEOP_ERR_IO 3

#define WAVEOP_ERR_NUMERIC 4

/**
 * A loaded model (checkpoint parameters plus configuration). Opaque.
 */
typedef struct WaveopModel WaveopModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's most recent error message into `buf`
 * (NUL-terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null (query mode).
 */
uintptr_t waveop_last_error(char *buf, uintptr_t len);

/**
 * Static version string of the library.
 */
const char *waveop_version(void);

/**
 * Load a checkpoint file into a model handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t waveop_model_load(const char *path, struct WaveopModel **out);

/**
 * Release a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must have come from [`waveop_model_load`] and not been freed.
 */
void waveop_model_free(struct WaveopModel *model);

/**
 * Input channel count of a loaded model (0 on null).
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uintptr_t waveop_model_in_channels(const struct WaveopModel *model);

/**
 * Output channel count of a loaded model (0 on null).
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uintptr_t waveop_model_out_channels(const struct WaveopModel *model);

/**
 * Forward pass on one channel-major field of `in_channels * h * w` doubles;
 * writes `out_channels * h * w` doubles. Any power-of-two grid carrying the
 * model's retained modes works — spectral weights re-embed automatically.
 *
 * # Safety
 * `input` and `output` must point to buffers of the stated lengths.
 */
int32_t waveop_model_forward(const struct WaveopModel *model,
                             const double *input,
                             uintptr_t in_channels,
                             uintptr_t h,
                             uintptr_t w,
                             double *output,
                             uintptr_t output_len);

/**
 * Normalized mean squared error of two real vectors (interleaved complex
 * counts as two reals); writes the linear value and its dB form.
 *
 * # Safety
 * `estimate` and `truth` must hold `len` doubles; out-pointers non-null.
 */
int32_t waveop_nmse(const double *estimate,
                    const double *truth,
                    uintptr_t len,
                    double *linear,
                    double *db);

/**
 * Free-space scalar Helmholtz kernel between two points separated by
 * (dx, dy, dz) at wavenumber k0.
 *
 * # Safety
 * `re` and `im` must be valid pointers.
 */
int32_t waveop_green(double k0, double dx, double dy, double dz, double *re, double *im);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus
