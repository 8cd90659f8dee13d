#ifndef WZGALERKIN_H
#define WZGALERKIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WzgStatus {
  WZG_STATUS_OK = 0,
  WZG_STATUS_NULL_POINTER = 1,
  WZG_STATUS_INVALID_ARGUMENT = 2,
  WZG_STATUS_NOT_NESTED = 3,
  WZG_STATUS_HURST_OUT_OF_RANGE = 4,
  WZG_STATUS_NOT_SYMMETRIC = 5,
  WZG_STATUS_CHOLESKY_BREAKDOWN = 6,
  WZG_STATUS_OUT_OF_DOMAIN = 7,
  WZG_STATUS_NON_FINITE = 8,
  WZG_STATUS_DEGENERATE_FIT = 9,
  WZG_STATUS_CONFIG = 10,
  WZG_STATUS_IO = 11,
  WZG_STATUS_JSON = 12,
  WZG_STATUS_PANIC = 13,
} WzgStatus;

// Opaque space-time grid.
typedef struct WzgGrid WzgGrid;

// Opaque regularized noise field.
typedef struct WzgNoise WzgNoise;

// Opaque experiment report.
typedef struct WzgReport WzgReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library from the same thread.
const char *wzg_last_error(void);

// Library version as a static NUL-terminated string.
const char *wzg_version(void);

// Uniform grid with `m` time slabs on `[0, t_final]` and `n` space cells on `[0, 1]`.
//
// # Safety
// `out` must be valid for one pointer write.
enum WzgStatus wzg_grid_new(double t_final, size_t m, size_t n, struct WzgGrid **out);

// # Safety
// `grid` must be null or a handle from [`wzg_grid_new`] not yet freed.
void wzg_grid_free(struct WzgGrid *grid);

// Samples the cell increments of the noise with Hurst index `hurst` on
// `grid` for stream `(seed, sample)` and regularizes them.
//
// # Safety
// `grid` must be a live handle and `out` valid for one pointer write.
enum WzgStatus wzg_noise_sample(const struct WzgGrid *grid,
                                double hurst,
                                uint64_t seed,
                                uint64_t sample,
                                struct WzgNoise **out);

// # Safety
// `noise` must be null or a handle from [`wzg_noise_sample`] not yet freed.
void wzg_noise_free(struct WzgNoise *noise);

// Value of the regularized noise at `(t, x)` in the closed domain.
//
// # Safety
// `noise` must be a live handle and `value` valid for one write.
enum WzgStatus wzg_noise_evaluate(const struct WzgNoise *noise, double t, double x, double *value);

// Spectral solution of the regularized heat equation at the final time,
// without drift. Writes `n_modes` sine coefficients to `out`.
//
// # Safety
// `u0` must hold `u0_len` values (or be null with `u0_len == 0`) and `out` must hold `n_modes`.
enum WzgStatus wzg_she_spectral(const struct WzgNoise *noise,
                                const double *u0,
                                size_t u0_len,
                                size_t n_modes,
                                double *out);

// Spectral solution of the regularized wave equation at the final time,
// without drift. Writes displacement and velocity coefficients.
//
// # Safety
// Input arrays must hold their stated lengths; `out_u` and `out_v` must hold `n_modes` values.
enum WzgStatus wzg_swe_spectral(const struct WzgNoise *noise,
                                const double *u0,
                                size_t u0_len,
                                const double *v0,
                                size_t v0_len,
                                size_t n_modes,
                                double *out_u,
                                double *out_v);

// Linear finite element solution of the regularized heat equation at the
// final time on the noise mesh, from and to interior nodal values (`n - 1` each).
//
// # Safety
// `u0` and `out` must each hold `n - 1` values for the noise mesh size `n`.
enum WzgStatus wzg_she_fem(const struct WzgNoise *noise,
                           const double *u0,
                           size_t substeps,
                           double *out);

// Runs an experiment by name (`she-wz`, `swe-wz`, `she-fem`, `swe-spectral`,
// `noise-isometry`, `lemma-checks`, `norm-scaling`, `structure`) with an
// optional JSON configuration layered over its defaults.
//
// # Safety
// `kind` must be a NUL-terminated string, `config_json` null or NUL-terminated,
// and `out` valid for one pointer write.
enum WzgStatus wzg_run_experiment(const char *kind,
                                  const char *config_json,
                                  struct WzgReport **out);

// 1 when every check of the report passed, 0 otherwise (or for a null report).
//
// # Safety
// `report` must be null or a live handle.
int32_t wzg_report_passed(const struct WzgReport *report);

// The report as JSON, owned by the report.
//
// # Safety
// `report` must be null or a live handle.
const char *wzg_report_json(const struct WzgReport *report);

// # Safety
// `report` must be null or a handle from [`wzg_run_experiment`] not yet freed.
void wzg_report_free(struct WzgReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WZGALERKIN_H */
