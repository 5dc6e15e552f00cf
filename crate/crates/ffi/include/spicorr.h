#ifndef SPICORR_H
#define SPICORR_H

/* Generated by cbindgen from spicorr-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Chamfer distance flavor.
 */
typedef enum SpicorrChamferMode {
  /**
   * Mean Euclidean nearest-neighbor distance, both directions.
   */
  SPICORR_CHAMFER_MODE_L1_POINT = 0,
  /**
   * Mean squared Euclidean nearest-neighbor distance, both directions.
   */
  SPICORR_CHAMFER_MODE_SQUARED_L2_POINT = 1,
} SpicorrChamferMode;

/**
 * Result of every fallible call.
 */
typedef enum SpicorrStatus {
  SPICORR_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  SPICORR_STATUS_NULL_ARGUMENT = 1,
  /**
   * Inputs violated the operation's preconditions.
   */
  SPICORR_STATUS_INVALID_INPUT = 2,
  /**
   * Structurally valid but numerically degenerate inputs.
   */
  SPICORR_STATUS_DEGENERATE = 3,
  /**
   * The quantity does not exist for these inputs (e.g. correlation of
   * a constant sequence).
   */
  SPICORR_STATUS_UNDEFINED = 4,
  /**
   * Unexpected internal failure; see `spicorr_last_error`.
   */
  SPICORR_STATUS_INTERNAL = 5,
} SpicorrStatus;

typedef struct SpicorrMesh SpicorrMesh;

typedef struct SpicorrPca SpicorrPca;

typedef struct SpicorrPoints SpicorrPoints;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the library, as a static NUL-terminated string.
 */
const char *spicorr_version(void);

/**
 * Copies the most recent error message on this thread into `buf`
 * (truncating to `cap - 1` bytes plus a NUL) and returns the full
 * message length including the NUL, or 0 when no error is stored.
 * Passing a null `buf` or zero `cap` just queries the length.
 *
 * # Safety
 * `buf`, when non-null, must point to `cap` writable bytes.
 */
size_t spicorr_last_error(char *buf, size_t cap);

/**
 * Builds a point set from `count` xyz triples. Returns null when the
 * buffer is null (for nonzero `count`) or any coordinate is non-finite.
 *
 * # Safety
 * `xyz` must point to `3 * count` readable doubles.
 */
struct SpicorrPoints *spicorr_points_new(const double *xyz, size_t count);

/**
 * Frees a point set; null is a no-op.
 *
 * # Safety
 * `p` must be a pointer from `spicorr_points_new`, not yet freed.
 */
void spicorr_points_free(struct SpicorrPoints *p);

/**
 * Number of points in the set; 0 for null.
 *
 * # Safety
 * `p` must be null or a live points handle.
 */
size_t spicorr_points_len(const struct SpicorrPoints *p);

/**
 * Builds a triangle mesh from `vertex_count` xyz triples and
 * `face_count` index triples. Returns null on invalid topology
 * (out-of-range indices, fewer than 4 vertices, no faces).
 *
 * # Safety
 * `xyz` must point to `3 * vertex_count` doubles and `faces` to
 * `3 * face_count` uint32 values.
 */
struct SpicorrMesh *spicorr_mesh_new(const double *xyz,
                                     size_t vertex_count,
                                     const uint32_t *faces,
                                     size_t face_count);

/**
 * Frees a mesh; null is a no-op.
 *
 * # Safety
 * `m` must be a pointer from `spicorr_mesh_new`, not yet freed.
 */
void spicorr_mesh_free(struct SpicorrMesh *m);

/**
 * Symmetric Chamfer distance between two point sets.
 *
 * # Safety
 * `a` and `b` must be live points handles; `out` must be writable.
 */
enum SpicorrStatus spicorr_chamfer_distance(const struct SpicorrPoints *a,
                                            const struct SpicorrPoints *b,
                                            enum SpicorrChamferMode mode,
                                            double *out);

/**
 * Mean distance from each point to the mesh surface.
 *
 * # Safety
 * `points` and `mesh` must be live handles; `out` must be writable.
 */
enum SpicorrStatus spicorr_point_to_mesh_distance(const struct SpicorrPoints *points,
                                                  const struct SpicorrMesh *mesh,
                                                  double *out);

/**
 * Surface-to-surface distance: the mean mesh is warped by the landmark
 * map `mean_corr -> predicted_corr` and compared against `truth`.
 *
 * # Safety
 * All handles must be live; `out` must be writable.
 */
enum SpicorrStatus spicorr_surface_to_surface_distance(const struct SpicorrMesh *truth,
                                                       const struct SpicorrPoints *predicted_corr,
                                                       const struct SpicorrPoints *mean_corr,
                                                       const struct SpicorrMesh *mean_mesh,
                                                       double *out);

/**
 * Pearson correlation of two equally long sequences. Returns
 * `Undefined` when either sequence is constant or shorter than 2.
 *
 * # Safety
 * `x` and `y` must point to `n` readable doubles; `out` must be
 * writable.
 */
enum SpicorrStatus spicorr_pearson(const double *x, const double *y, size_t n, double *out);

/**
 * Fits a PCA shape model to `shapes` correspondence sets, each of
 * `points_per_shape` xyz triples, laid out consecutively.
 *
 * # Safety
 * `data` must point to `3 * shapes * points_per_shape` doubles.
 */
struct SpicorrPca *spicorr_pca_fit(const double *data, size_t shapes, size_t points_per_shape);

/**
 * Frees a PCA model; null is a no-op.
 *
 * # Safety
 * `p` must be a pointer from `spicorr_pca_fit`, not yet freed.
 */
void spicorr_pca_free(struct SpicorrPca *p);

/**
 * Number of retained eigenmodes; 0 for null.
 *
 * # Safety
 * `p` must be null or a live PCA handle.
 */
size_t spicorr_pca_mode_count(const struct SpicorrPca *p);

/**
 * Smallest number of modes whose cumulative variance share reaches
 * `threshold`. A variance-free (degenerate) cohort yields 0 modes.
 *
 * # Safety
 * `p` must be a live PCA handle; `out_modes` must be writable.
 */
enum SpicorrStatus spicorr_pca_compactness(const struct SpicorrPca *p,
                                           double threshold,
                                           size_t *out_modes);

/**
 * Copies the cumulative variance curve (one share per mode, ending at
 * 1) into `buf` and stores the number of modes in `written`. When `cap`
 * is too small, fills what fits and still reports the full length.
 *
 * # Safety
 * `p` must be a live PCA handle; `buf` must hold `cap` doubles;
 * `written` must be writable.
 */
enum SpicorrStatus spicorr_pca_cumulative_variance(const struct SpicorrPca *p,
                                                   double *buf,
                                                   size_t cap,
                                                   size_t *written);

/**
 * Mean per-point squared reconstruction error of held-out shapes
 * projected onto the model's 95% basis. Layout as in
 * `spicorr_pca_fit`.
 *
 * # Safety
 * `p` must be a live PCA handle; `data` must hold
 * `3 * shapes * points_per_shape` doubles; `out` must be writable.
 */
enum SpicorrStatus spicorr_pca_generalization(const struct SpicorrPca *p,
                                              const double *data,
                                              size_t shapes,
                                              size_t points_per_shape,
                                              double *out);

/**
 * Specificity: mean distance from `samples` random model draws to their
 * nearest training shape. `data` is the training cohort, laid out as in
 * `spicorr_pca_fit`; the draw is deterministic in `seed`.
 *
 * # Safety
 * `p` must be a live PCA handle; `data` must hold
 * `3 * shapes * points_per_shape` doubles; `out` must be writable.
 */
enum SpicorrStatus spicorr_pca_specificity(const struct SpicorrPca *p,
                                           const double *data,
                                           size_t shapes,
                                           size_t points_per_shape,
                                           size_t samples,
                                           uint64_t seed,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPICORR_H */
