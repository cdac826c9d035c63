#ifndef SEMICLASS_H
#define SEMICLASS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum SemiclassStatus {
  SEMICLASS_STATUS_OK = 0,
  SEMICLASS_STATUS_NULL_POINTER = 1,
  SEMICLASS_STATUS_INVALID_ARGUMENT = 2,
  SEMICLASS_STATUS_GRID_MISMATCH = 3,
  SEMICLASS_STATUS_NOT_ISOLATED = 4,
  SEMICLASS_STATUS_GAUGE = 5,
  SEMICLASS_STATUS_WRAP_CONTAMINATION = 6,
  SEMICLASS_STATUS_INSTABILITY = 7,
  SEMICLASS_STATUS_BANK_INCOMPLETE = 8,
  SEMICLASS_STATUS_METRIC_FLOOR = 9,
  SEMICLASS_STATUS_CONFIG = 10,
  SEMICLASS_STATUS_IO = 11,
  SEMICLASS_STATUS_PANIC = 12,
} SemiclassStatus;

/**
 * Band structure on the quasimomentum grid of a [`SemiclassGrid`].
 */
typedef struct SemiclassBands SemiclassBands;

/**
 * Real-space grid over a periodic box of lattice cells.
 */
typedef struct SemiclassGrid SemiclassGrid;

/**
 * Wave function sampled on a grid.
 */
typedef struct SemiclassWave SemiclassWave;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *semiclass_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *semiclass_version(void);

/**
 * Grid of `n_cells` cells of length `a`, `points_per_cell` samples each.
 * Both counts must be powers of two, at least 4.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum SemiclassStatus semiclass_grid_new(double a,
                                        size_t n_cells,
                                        size_t points_per_cell,
                                        struct SemiclassGrid **out);

/**
 * Number of real-space samples.
 *
 * # Safety
 * `grid` must be a live grid handle or null; `out` must be writable.
 */
enum SemiclassStatus semiclass_grid_n_points(const struct SemiclassGrid *grid, size_t *out);

/**
 * # Safety
 * `grid` must be null or a handle from [`semiclass_grid_new`] not yet freed.
 */
void semiclass_grid_free(struct SemiclassGrid *grid);

/**
 * Bands of `V(x) = Σ 2 amplitudes[i] cos(harmonics[i] γ* x)` on the
 * k-grid of `grid`, from a plane-wave basis with `|G| ≤ cutoff γ*`.
 *
 * # Safety
 * `grid` must be a live handle, the arrays must hold `n_terms` values
 * each and `out` must be writable.
 */
enum SemiclassStatus semiclass_bands_new(const struct SemiclassGrid *grid,
                                         const uint32_t *harmonics,
                                         const double *amplitudes,
                                         size_t n_terms,
                                         size_t cutoff,
                                         size_t n_bands,
                                         double gap_floor,
                                         struct SemiclassBands **out);

/**
 * Number of k-points and of computed bands.
 *
 * # Safety
 * `bands` must be a live handle; `n_k` and `n_bands` must be writable.
 */
enum SemiclassStatus semiclass_bands_shape(const struct SemiclassBands *bands,
                                           size_t *n_k,
                                           size_t *n_bands);

/**
 * Copies the k-grid into `out` (`len ≥ n_k`).
 *
 * # Safety
 * `bands` must be a live handle and `out` must hold `len` doubles.
 */
enum SemiclassStatus semiclass_bands_k_grid(const struct SemiclassBands *bands,
                                            double *out,
                                            size_t len);

/**
 * Copies `E_n` on the k-grid into `out` (`len ≥ n_k`), `n` 0-based.
 *
 * # Safety
 * `bands` must be a live handle and `out` must hold `len` doubles.
 */
enum SemiclassStatus semiclass_bands_energies(const struct SemiclassBands *bands,
                                              size_t n,
                                              double *out,
                                              size_t len);

/**
 * Copies the velocities `∇E_n` into `out`. Fails unless band `n` is
 * isolated.
 *
 * # Safety
 * `bands` must be a live handle and `out` must hold `len` doubles.
 */
enum SemiclassStatus semiclass_bands_velocities(const struct SemiclassBands *bands,
                                                size_t n,
                                                double *out,
                                                size_t len);

/**
 * Whether band `n` is isolated and, if so, its Zak phase in `(-π, π]`
 * (`NaN` otherwise).
 *
 * # Safety
 * `bands` must be a live handle; `isolated` and `zak_phase` must be
 * writable.
 */
enum SemiclassStatus semiclass_bands_isolation(const struct SemiclassBands *bands,
                                               size_t n,
                                               bool *isolated,
                                               double *zak_phase);

/**
 * # Safety
 * `bands` must be null or a handle from [`semiclass_bands_new`] not yet
 * freed.
 */
void semiclass_bands_free(struct SemiclassBands *bands);

/**
 * Normalized packet in band `n` with Gaussian Bloch coefficients of
 * center `k_center` and width `sigma_k`.
 *
 * # Safety
 * `bands` must be a live handle and `out` must be writable.
 */
enum SemiclassStatus semiclass_packet_new(const struct SemiclassBands *bands,
                                          size_t n,
                                          double k_center,
                                          double sigma_k,
                                          struct SemiclassWave **out);

/**
 * Wave function from `n_points` interleaved samples on `grid`.
 *
 * # Safety
 * `grid` must be a live handle, `samples` must hold `2 * n_points`
 * doubles and `out` must be writable.
 */
enum SemiclassStatus semiclass_wave_new(const struct SemiclassGrid *grid,
                                        const double *samples,
                                        size_t n_points,
                                        struct SemiclassWave **out);

/**
 * Number of samples and `L²` norm.
 *
 * # Safety
 * `wave` must be a live handle; `n_points` and `norm` must be writable.
 */
enum SemiclassStatus semiclass_wave_info(const struct SemiclassWave *wave,
                                         size_t *n_points,
                                         double *norm);

/**
 * Copies the samples as interleaved pairs into `out` (`len ≥ 2 n_points`).
 *
 * # Safety
 * `wave` must be a live handle and `out` must hold `len` doubles.
 */
enum SemiclassStatus semiclass_wave_samples(const struct SemiclassWave *wave,
                                            double *out,
                                            size_t len);

/**
 * Macroscopic position `⟨ψ, εx ψ⟩`, with `x` unwrapped about the center
 * of mass.
 *
 * # Safety
 * `wave` must be a live handle and `out` must be writable.
 */
enum SemiclassStatus semiclass_wave_position(const struct SemiclassWave *wave,
                                             double epsilon,
                                             double *out);

/**
 * # Safety
 * `wave` must be null or a handle from this library not yet freed.
 */
void semiclass_wave_free(struct SemiclassWave *wave);

/**
 * Evolves `wave` to macroscopic time `t_macro` under
 * `-½Δ + V(x) + W(εx)`, with `V` as in [`semiclass_bands_new`] and `W` a
 * sum of `n_gaussians` bumps given as `(amplitude, center, width)`
 * triples. `dt_factor` sets the micro step `dt_factor / E_max`; pass 0
 * for the default. Writes the final macroscopic position to `position`
 * if it is non-null.
 *
 * # Safety
 * `wave` must be a live handle, the arrays must hold `n_terms` values and
 * `3 * n_gaussians` values and `out` must be writable.
 */
enum SemiclassStatus semiclass_propagate(const struct SemiclassWave *wave,
                                         const uint32_t *harmonics,
                                         const double *amplitudes,
                                         size_t n_terms,
                                         const double *gaussians,
                                         size_t n_gaussians,
                                         double epsilon,
                                         double t_macro,
                                         double dt_factor,
                                         struct SemiclassWave **out,
                                         double *position);

/**
 * Least-squares slope of `log values` against `log epsilons`. Needs at
 * least three points above the numerical floor.
 *
 * # Safety
 * Both arrays must hold `n` doubles; `slope` and `r2` must be writable.
 */
enum SemiclassStatus semiclass_fit_order(const double *epsilons,
                                         const double *values,
                                         size_t n,
                                         double *slope,
                                         double *r2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMICLASS_H */
