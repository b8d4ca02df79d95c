#ifndef OPENWORLD_H
#define OPENWORLD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum OwStatus {
  OW_STATUS_OK = 0,
  OW_STATUS_NULL_POINTER = 1,
  OW_STATUS_INVALID_INPUT = 2,
  OW_STATUS_DIMENSION_MISMATCH = 3,
  OW_STATUS_EMPTY_MODEL = 4,
  OW_STATUS_NUMERICAL = 5,
  OW_STATUS_IO = 6,
  OW_STATUS_PARSE = 7,
  OW_STATUS_PANIC = 8,
} OwStatus;

/**
 * Opaque learner handle.
 */
typedef struct OwLearner OwLearner;

/**
 * Open-set prediction. `is_unknown` is 1 when the sample is rejected, in
 * which case `label` is meaningless. `threshold` is NaN for closed-set
 * learners.
 */
typedef struct OwPrediction {
  int32_t is_unknown;
  int64_t label;
  double confidence;
  double threshold;
} OwPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ow_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ow_version(void);

/**
 * Creates a learner. `kind` is one of "oncm", "onno", "onbc", "ncm-fixed",
 * "nno-fixed", "nbc-fixed"; `rank_m = 0` picks `min(d, 256)`.
 *
 * # Safety
 * `kind` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OwStatus ow_learner_new(const char *kind,
                             size_t d,
                             size_t rank_m,
                             double gamma,
                             struct OwLearner **out);

/**
 * Releases a handle; NULL is ignored.
 *
 * # Safety
 * `learner` must come from this library and not be used afterwards.
 */
void ow_learner_free(struct OwLearner *learner);

/**
 * Feeds one labeled sample.
 *
 * # Safety
 * `x` must point to `len` doubles.
 */
enum OwStatus ow_learner_learn(struct OwLearner *learner, const double *x, size_t len, int64_t y);

/**
 * Open-set prediction for one sample.
 *
 * # Safety
 * `x` must point to `len` doubles and `out` be a valid pointer.
 */
enum OwStatus ow_learner_predict(const struct OwLearner *learner,
                                 const double *x,
                                 size_t len,
                                 struct OwPrediction *out);

/**
 * Closed-set prediction (never unknown).
 *
 * # Safety
 * `x` must point to `len` doubles and `out` be a valid pointer.
 */
enum OwStatus ow_learner_predict_closed(const struct OwLearner *learner,
                                        const double *x,
                                        size_t len,
                                        int64_t *out);

/**
 * Stops metric and threshold learning.
 *
 * # Safety
 * `learner` must be a valid handle.
 */
enum OwStatus ow_learner_freeze(struct OwLearner *learner);

/**
 * Feature dimension and number of classes seen so far.
 *
 * # Safety
 * Pointers must be valid; either output may be NULL.
 */
enum OwStatus ow_learner_info(const struct OwLearner *learner, size_t *dim, size_t *num_classes);

/**
 * Writes a JSON snapshot.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum OwStatus ow_learner_save(const struct OwLearner *learner, const char *path);

/**
 * Restores a learner from a JSON snapshot.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OwStatus ow_learner_load(const char *path, struct OwLearner **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPENWORLD_H */
