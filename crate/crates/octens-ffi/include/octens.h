#ifndef OCTENS_H
#define OCTENS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every fallible call.
 */
typedef enum OctensStatus {
  OctensStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  OctensStatus_NullArgument = 1,
  /**
   * A parameter violated its documented range or shape.
   */
  OctensStatus_InvalidParameter = 2,
  /**
   * The underlying file could not be read or written.
   */
  OctensStatus_IoError = 3,
  /**
   * A file parsed but violated its format contract.
   */
  OctensStatus_FormatError = 4,
  /**
   * Inputs that must agree (ids, labels, lengths) do not.
   */
  OctensStatus_Mismatch = 5,
} OctensStatus;

/**
 * Opaque binary label table aligned with a score table by sample id.
 */
typedef struct OctensLabels OctensLabels;

/**
 * Opaque prediction-score table (rows x biomarker columns, values in [0,1]).
 */
typedef struct OctensScores OctensScores;

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *octens_last_error(void);

/**
 * Static library version string; never freed by the caller.
 */
const char *octens_version(void);

/**
 * Reads a score CSV into a new handle, or returns null (see
 * [`octens_last_error`]).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct OctensScores *octens_scores_read(const char *path);

/**
 * Reads a label CSV into a new handle, or returns null.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct OctensLabels *octens_labels_read(const char *path);

/**
 * Writes a score handle back to canonical CSV.
 *
 * # Safety
 * `handle` must come from this library and be live; `path` must be a
 * valid NUL-terminated string.
 */
enum OctensStatus octens_scores_write(const struct OctensScores *handle, const char *path);

/**
 * Writes a label handle back to canonical CSV.
 *
 * # Safety
 * As [`octens_scores_write`].
 */
enum OctensStatus octens_labels_write(const struct OctensLabels *handle, const char *path);

/**
 * Number of sample rows in a score handle (0 for null).
 *
 * # Safety
 * `handle` must be null or a live handle from this library.
 */
uintptr_t octens_scores_rows(const struct OctensScores *handle);

/**
 * Number of label columns in a score handle (0 for null).
 *
 * # Safety
 * `handle` must be null or a live handle from this library.
 */
uintptr_t octens_scores_cols(const struct OctensScores *handle);

/**
 * Copies one score cell into `out`.
 *
 * # Safety
 * `handle` must be live; `out` must point to a writable f64.
 */
enum OctensStatus octens_scores_get(const struct OctensScores *handle,
                                    uintptr_t row,
                                    uintptr_t col,
                                    double *out);

/**
 * Copies one label cell (0 or 1) into `out`.
 *
 * # Safety
 * `handle` must be live; `out` must point to a writable u8.
 */
enum OctensStatus octens_labels_get(const struct OctensLabels *handle,
                                    uintptr_t row,
                                    uintptr_t col,
                                    uint8_t *out);

/**
 * Releases a score handle. Null is a no-op.
 *
 * # Safety
 * `handle` must come from this library and not already be freed.
 */
void octens_scores_free(struct OctensScores *handle);

/**
 * Releases a label handle. Null is a no-op.
 *
 * # Safety
 * `handle` must come from this library and not already be freed.
 */
void octens_labels_free(struct OctensLabels *handle);

/**
 * Weighted-averages `n_branches` score handles (weights normalized to
 * sum 1; rows restricted to the ids all branches share). Returns a new
 * handle or null.
 *
 * # Safety
 * `branches` must point to `n_branches` live handles and `weights` to
 * `n_weights` doubles.
 */
struct OctensScores *octens_combine(const struct OctensScores *const *branches,
                                    uintptr_t n_branches,
                                    const double *weights,
                                    uintptr_t n_weights);

/**
 * [`octens_combine`] followed by thresholding at `threshold`.
 *
 * # Safety
 * As [`octens_combine`].
 */
struct OctensLabels *octens_predict(const struct OctensScores *const *branches,
                                    uintptr_t n_branches,
                                    const double *weights,
                                    uintptr_t n_weights,
                                    double threshold);

/**
 * Per-label F1 and the macro average for prediction/truth handles (rows
 * are matched by sample id first). `per_label` receives `per_label_len`
 * values, which must equal the label column count.
 *
 * # Safety
 * Handles must be live; `per_label` must point to `per_label_len`
 * writable doubles and `macro_f1` to one.
 */
enum OctensStatus octens_evaluate(const struct OctensLabels *pred,
                                  const struct OctensLabels *truth,
                                  double *per_label,
                                  uintptr_t per_label_len,
                                  double *macro_f1);

/**
 * Searches branch weights maximizing macro-F1 against `truth`.
 * `method` 0 = exhaustive grid, 1 = coordinate ascent. The optimal
 * weights land in `out_weights` (length `n_branches`) and the achieved
 * objective in `out_objective`.
 *
 * # Safety
 * `branches` must point to `n_branches` live handles, `truth` must be a
 * live handle, and the output pointers must be writable.
 */
enum OctensStatus octens_optimize(const struct OctensScores *const *branches,
                                  uintptr_t n_branches,
                                  const struct OctensLabels *truth,
                                  double step,
                                  int method,
                                  uint32_t max_rounds,
                                  double threshold,
                                  double *out_weights,
                                  double *out_objective);

/**
 * Eye-disjoint split of a manifest CSV, written as a `sample_id,split`
 * CSV to `out_path`.
 *
 * # Safety
 * Both paths must be valid NUL-terminated strings.
 */
enum OctensStatus octens_split_manifest(const char *manifest_path,
                                        double val_fraction,
                                        uint64_t seed,
                                        const char *out_path);

#endif  /* OCTENS_H */
