/* Copyright 2026 Backflow Contributors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C ABI for the backflow measures. All functions return BF_OK (0) or an
 * error code; bf_last_error() describes the most recent failure on the
 * calling thread. Handles are opaque and freed with bf_result_free().
 */

#ifndef BACKFLOW_H
#define BACKFLOW_H

/* Generated by cbindgen from backflow-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define BF_OK 0

/**
 * I/O or serialization failure.
 */
#define BF_ERR_IO 1

/**
 * Bad configuration or argument.
 */
#define BF_ERR_USAGE 2

/**
 * Resource guard refused the request (dense size limits).
 */
#define BF_ERR_RESOURCE 3

/**
 * Numerical failure inside the pipelines.
 */
#define BF_ERR_NUMERICAL 4

/**
 * A null pointer where a value was required.
 */
#define BF_ERR_NULL 64

/**
 * An internal panic was caught at the boundary.
 */
#define BF_ERR_PANIC 70

/**
 * The distance measure `N_BLP,2`.
 */
#define BF_MEASURE_BLP2 0

/**
 * The mutual-information measure `N_LFS,2`.
 */
#define BF_MEASURE_LFS2 1

/**
 * Opaque measure result handle.
 */
typedef struct BfResult BfResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent error on this thread. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *bf_last_error(void);

/**
 * Library version string (static storage).
 */
const char *bf_version(void);

/**
 * Run a measure pipeline from flat config text (`key = value` lines, same
 * grammar as the CLI `--config` file).
 *
 * `measure` is [`BF_MEASURE_BLP2`] or [`BF_MEASURE_LFS2`]. On success
 * writes a handle into `out` and returns [`BF_OK`]; the handle must be
 * released with [`bf_result_free`].
 *
 * # Safety
 * `config_text` must be a valid NUL-terminated UTF-8 string and `out` a
 * valid pointer.
 */
int bf_run_measure(const char *config_text, int measure, struct BfResult **out);

/**
 * The measure value (maximized positive variation).
 *
 * # Safety
 * `res` must be a live handle from [`bf_run_measure`].
 */
double bf_result_value(const struct BfResult *res);

/**
 * Bootstrap standard error of the measure value.
 *
 * # Safety
 * `res` must be a live handle from [`bf_run_measure`].
 */
double bf_result_sigma(const struct BfResult *res);

/**
 * Number of points in the arg-max candidate's time series.
 *
 * # Safety
 * `res` must be a live handle from [`bf_run_measure`].
 */
uintptr_t bf_result_series_len(const struct BfResult *res);

/**
 * Read point `i` of the arg-max candidate's series into `t`, `value`,
 * `sigma` (any of which may be null to skip).
 *
 * # Safety
 * `res` must be a live handle; non-null output pointers must be valid.
 */
int bf_result_series_point(const struct BfResult *res,
                           uintptr_t i,
                           double *t,
                           double *value,
                           double *sigma);

/**
 * Serialize the full result (all candidates and series) to JSON. Free the
 * returned string with [`bf_string_free`].
 *
 * # Safety
 * `res` must be a live handle from [`bf_run_measure`].
 */
char *bf_result_to_json(const struct BfResult *res);

/**
 * Release a string returned by [`bf_result_to_json`].
 *
 * # Safety
 * `s` must originate from this library and not have been freed already.
 */
void bf_string_free(char *s);

/**
 * Release a result handle.
 *
 * # Safety
 * `res` must originate from [`bf_run_measure`] and not have been freed
 * already.
 */
void bf_result_free(struct BfResult *res);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* BACKFLOW_H */
