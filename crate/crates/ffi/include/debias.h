#ifndef DEBIAS_H
#define DEBIAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * How successive nullspace projections are combined.
 */
typedef enum DebiasProjectionMode {
  DEBIAS_PROJECTION_MODE_ORTHOGONAL_BASIS = 0,
  DEBIAS_PROJECTION_MODE_PRODUCT = 1,
} DebiasProjectionMode;

/**
 * Result of a fallible call.
 */
typedef enum DebiasStatus {
  DEBIAS_STATUS_OK = 0,
  DEBIAS_STATUS_NULL_POINTER = 1,
  DEBIAS_STATUS_INVALID_ARGUMENT = 2,
  DEBIAS_STATUS_IO = 3,
  DEBIAS_STATUS_PARSE = 4,
  DEBIAS_STATUS_DIMENSION_MISMATCH = 5,
  DEBIAS_STATUS_UNKNOWN_TOKEN = 6,
  DEBIAS_STATUS_DEGENERATE = 7,
  DEBIAS_STATUS_PANIC = 8,
} DebiasStatus;

/**
 * Labeled vectors (opaque).
 */
typedef struct DebiasLabeledSet DebiasLabeledSet;

/**
 * Learned projection (opaque).
 */
typedef struct DebiasProjection DebiasProjection;

/**
 * Embedding space (opaque).
 */
typedef struct DebiasSpace DebiasSpace;

/**
 * INLP settings. Obtain defaults from `debias_inlp_config_default`.
 */
typedef struct DebiasInlpConfig {
  size_t max_classifiers;
  double stop_epsilon;
  enum DebiasProjectionMode mode;
  size_t epochs;
  double learning_rate;
  double l2;
  uint64_t seed;
  bool warm_start;
} DebiasInlpConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *debias_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *debias_version(void);

struct DebiasInlpConfig debias_inlp_config_default(void);

/**
 * Loads a labeled vector file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DebiasStatus debias_labeled_load(const char *path, struct DebiasLabeledSet **out);

/**
 * Builds a binary labeled set from `n` row-major `d`-dimensional vectors
 * and labels in {0, 1}. Row ids are `0..n`.
 *
 * # Safety
 * `data` must hold `n*d` doubles, `labels` `n` values, `out` must be valid.
 */
enum DebiasStatus debias_labeled_from_rows(const double *data,
                                           size_t n,
                                           size_t d,
                                           const uint32_t *labels,
                                           struct DebiasLabeledSet **out);

/**
 * # Safety
 * `set` must come from this library and not be used afterwards.
 */
void debias_labeled_free(struct DebiasLabeledSet *set);

/**
 * Number of vectors; 0 for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t debias_labeled_len(const struct DebiasLabeledSet *set);

/**
 * Vector dimension; 0 for a null handle.
 *
 * # Safety
 * `set` must be null or a live handle.
 */
size_t debias_labeled_dim(const struct DebiasLabeledSet *set);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DebiasStatus debias_space_load(const char *path, struct DebiasSpace **out);

/**
 * # Safety
 * `space` must be a live handle and `path` a NUL-terminated string.
 */
enum DebiasStatus debias_space_save(const struct DebiasSpace *space, const char *path);

/**
 * # Safety
 * `space` must come from this library and not be used afterwards.
 */
void debias_space_free(struct DebiasSpace *space);

/**
 * # Safety
 * `space` must be null or a live handle.
 */
size_t debias_space_len(const struct DebiasSpace *space);

/**
 * # Safety
 * `space` must be null or a live handle.
 */
size_t debias_space_dim(const struct DebiasSpace *space);

/**
 * Runs INLP on a binary train set, stopping on `dev`.
 *
 * # Safety
 * Handles must be live; `config` may be null for defaults; `out` must be valid.
 */
enum DebiasStatus debias_run_inlp(const struct DebiasLabeledSet *train,
                                  const struct DebiasLabeledSet *dev,
                                  const struct DebiasInlpConfig *config,
                                  struct DebiasProjection **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DebiasStatus debias_projection_load(const char *path, struct DebiasProjection **out);

/**
 * # Safety
 * `proj` must be a live handle and `path` a NUL-terminated string.
 */
enum DebiasStatus debias_projection_save(const struct DebiasProjection *proj, const char *path);

/**
 * # Safety
 * `proj` must come from this library and not be used afterwards.
 */
void debias_projection_free(struct DebiasProjection *proj);

/**
 * # Safety
 * `proj` must be null or a live handle.
 */
size_t debias_projection_dim(const struct DebiasProjection *proj);

/**
 * Number of removed directions.
 *
 * # Safety
 * `proj` must be null or a live handle.
 */
size_t debias_projection_removed(const struct DebiasProjection *proj);

/**
 * Classifiers trained, including the one that triggered the stop.
 *
 * # Safety
 * `proj` must be null or a live handle.
 */
size_t debias_projection_iterations(const struct DebiasProjection *proj);

/**
 * # Safety
 * `proj` must be null or a live handle.
 */
bool debias_projection_converged(const struct DebiasProjection *proj);

/**
 * Copies the `d×d` matrix into `out` (row-major, `len` ≥ d*d).
 *
 * # Safety
 * `proj` must be live and `out` must hold `len` doubles.
 */
enum DebiasStatus debias_projection_matrix(const struct DebiasProjection *proj,
                                           double *out,
                                           size_t len);

/**
 * Projects `n` row-major vectors of dimension `d` into `out` (`n*d`).
 *
 * # Safety
 * `rows` and `out` must each hold `n*d` doubles.
 */
enum DebiasStatus debias_projection_apply(const struct DebiasProjection *proj,
                                          const double *rows,
                                          size_t n,
                                          size_t d,
                                          double *out);

/**
 * Projects every vector of a space into a new space handle.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum DebiasStatus debias_projection_apply_space(const struct DebiasProjection *proj,
                                                const struct DebiasSpace *space,
                                                struct DebiasSpace **out);

/**
 * Writes the `d×d` projection onto the nullspace of the `r×d` matrix `w`.
 *
 * # Safety
 * `w` must hold `r*d` doubles and `out` `d*d`.
 */
enum DebiasStatus debias_nullspace_projection(const double *w, size_t r, size_t d, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEBIAS_H */
