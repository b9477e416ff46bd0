#ifndef NP_SHAPE_H
#define NP_SHAPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum NpStatus {
  NP_STATUS_OK = 0,
  NP_STATUS_NULL_POINTER = 1,
  NP_STATUS_INVALID_ARGUMENT = 2,
  NP_STATUS_INVALID_CURVE = 3,
  NP_STATUS_CLUSTER = 4,
  NP_STATUS_NUMERICAL = 5,
  NP_STATUS_BUFFER_TOO_SMALL = 6,
  NP_STATUS_PANIC = 7,
} NpStatus;

/**
 * A sampled closed curve.
 */
typedef struct NpCurve NpCurve;

/**
 * Eigenvalues of K* on a curve, sorted by decreasing real part.
 */
typedef struct NpSpectrum NpSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *np_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *np_version(void);

/**
 * Builds a curve from a specification such as `ellipse:1,0.5` sampled at
 * `n` nodes.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NpStatus np_curve_new(const char *spec, size_t n, struct NpCurve **out);

/**
 * # Safety
 * `c` must be null or a handle from [`np_curve_new`] not yet freed.
 */
void np_curve_free(struct NpCurve *c);

/**
 * Node count, 0 for a null handle.
 *
 * # Safety
 * `c` must be null or a live curve handle.
 */
size_t np_curve_len(const struct NpCurve *c);

/**
 * Writes the nodes as interleaved x, y pairs; `len` counts doubles and must
 * be at least twice the node count.
 *
 * # Safety
 * `c` must be a live curve handle and `xy` must point to `len` writable
 * doubles.
 */
enum NpStatus np_curve_nodes(const struct NpCurve *c, double *xy, size_t len);

/**
 * Enclosed area and perimeter.
 *
 * # Safety
 * `c` must be a live curve handle; `area` and `length` valid pointers.
 */
enum NpStatus np_curve_measure(const struct NpCurve *c, double *area, double *length);

/**
 * Eigenvalues of K* on the curve.
 *
 * # Safety
 * `c` must be a live curve handle and `out` a valid pointer.
 */
enum NpStatus np_spectrum_new(const struct NpCurve *c, struct NpSpectrum **out);

/**
 * # Safety
 * `s` must be null or a handle from [`np_spectrum_new`] not yet freed.
 */
void np_spectrum_free(struct NpSpectrum *s);

/**
 * Eigenvalue count, 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live spectrum handle.
 */
size_t np_spectrum_len(const struct NpSpectrum *s);

/**
 * Copies real and imaginary parts, each buffer holding `len` doubles.
 *
 * # Safety
 * `s` must be a live spectrum handle; `re` and `im` must point to `len`
 * writable doubles.
 */
enum NpStatus np_spectrum_values(const struct NpSpectrum *s, double *re, double *im, size_t len);

/**
 * Derivative matrix of the eigenvalue cluster in (lambda - delta,
 * lambda + delta) along the named perturbation field (`normal-bump`,
 * `dilation`, `param:1,2,1,3`, ...). The m x m matrix is written row-major
 * into `out`, which holds `cap` doubles; `m` receives the cluster size even
 * when the buffer is too small.
 *
 * # Safety
 * `c` must be a live curve handle, `theta` a NUL-terminated string, `m` a
 * valid pointer and `out` must point to `cap` writable doubles.
 */
enum NpStatus np_cluster_derivative(const struct NpCurve *c,
                                    double lambda,
                                    double delta,
                                    const char *theta,
                                    size_t *m,
                                    double *out,
                                    size_t cap);

/**
 * k-th NP eigenvalue of the unit sphere in R^n as the fraction num / den,
 * with its multiplicity.
 *
 * # Safety
 * `num`, `den` and `multiplicity` must be valid pointers.
 */
enum NpStatus np_sphere_eigenvalue(uint32_t n,
                                   uint32_t k,
                                   int64_t *num,
                                   int64_t *den,
                                   uint64_t *multiplicity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NP_SHAPE_H */
