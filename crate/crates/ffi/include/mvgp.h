#ifndef MVGP_H
#define MVGP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. The first four match the command-line exit codes.
typedef enum MvgpStatus {
  MVGP_STATUS_OK = 0,
  MVGP_STATUS_INVALID_ARGUMENT = 1,
  MVGP_STATUS_DATA_ERROR = 2,
  MVGP_STATUS_NUMERICAL_ERROR = 3,
  MVGP_STATUS_NULL_POINTER = 4,
  MVGP_STATUS_PANIC = 5,
} MvgpStatus;

// A multi-view dataset.
typedef struct MvgpDataset MvgpDataset;

// A trained model.
typedef struct MvgpModel MvgpModel;

// Training settings. Zero or null fields take the library defaults.
typedef struct MvgpTrainOptions {
  uint64_t seed;
  uintptr_t max_iters;
  uintptr_t cv_repeats;
  // Candidate first-view weights (`a_len` values) or null.
  const double *a_values;
  uintptr_t a_len;
  // Candidate couplings (`b_len` values) or null.
  const double *b_values;
  uintptr_t b_len;
} MvgpTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *mvgp_last_error(void);

// Library version as a static nul-terminated string.
const char *mvgp_version(void);

// Build a dataset from row-major feature arrays.
//
// `features[k]` points to `n_examples × dims[k]` values of view `k`.
// `labels` holds `n_examples` values of `+1`/`-1`; pass null for data that
// will only be used for prediction (every label is then `+1`).
//
// # Safety
// All pointers must be valid for the stated lengths.
enum MvgpStatus mvgp_dataset_new(uintptr_t n_examples,
                                 uintptr_t n_views,
                                 const uintptr_t *dims,
                                 const double *const *features,
                                 const double *labels,
                                 struct MvgpDataset **out);

// Load a dataset from one CSV file per view. `label_column` is a column
// name or 0-based index in the first file; null means `label`.
//
// # Safety
// `paths` must hold `n_paths` nul-terminated strings.
enum MvgpStatus mvgp_dataset_load(const char *const *paths,
                                  uintptr_t n_paths,
                                  const char *label_column,
                                  struct MvgpDataset **out);

// # Safety
// `dataset` must be null or a handle from this library, not yet freed.
void mvgp_dataset_free(struct MvgpDataset *dataset);

// # Safety
// `dataset` must be a live handle; the out pointers must be valid.
enum MvgpStatus mvgp_dataset_shape(const struct MvgpDataset *dataset,
                                   uintptr_t *n_examples,
                                   uintptr_t *n_views);

// Train `method` (`gp1`, `gp2`, `gp3`, `mvgp1` or `mvgp2`) on `dataset`.
// `options` may be null for the defaults.
//
// # Safety
// `dataset` must be a live handle; `method` a nul-terminated string.
enum MvgpStatus mvgp_train(const struct MvgpDataset *dataset,
                           const char *method,
                           const struct MvgpTrainOptions *options,
                           struct MvgpModel **out);

// Load CSV files, train on every row and keep the file references so that
// the model can be written with [`mvgp_model_save`].
//
// # Safety
// As for [`mvgp_dataset_load`] and [`mvgp_train`].
enum MvgpStatus mvgp_train_files(const char *const *paths,
                                 uintptr_t n_paths,
                                 const char *label_column,
                                 const char *method,
                                 const struct MvgpTrainOptions *options,
                                 struct MvgpModel **out);

// Write a model trained with [`mvgp_train_files`].
//
// # Safety
// `model` must be a live handle; `path` a nul-terminated string.
enum MvgpStatus mvgp_model_save(const struct MvgpModel *model, const char *path);

// Load a model file written by the command-line tool or [`mvgp_model_save`].
//
// # Safety
// `path` must be a nul-terminated string and `out` valid.
enum MvgpStatus mvgp_model_load(const char *path, struct MvgpModel **out);

// # Safety
// `model` must be null or a handle from this library, not yet freed.
void mvgp_model_free(struct MvgpModel *model);

// Selected trade-off: weight of the first view and coupling strength.
//
// # Safety
// `model` must be a live handle; the out pointers must be valid.
enum MvgpStatus mvgp_model_tradeoff(const struct MvgpModel *model, double *a, double *b);

// Predict every row of `dataset`: combined scores and `±1` labels, each
// written to an array of `len` values (`len` must equal the row count).
// Either output may be null.
//
// # Safety
// Handles must be live and each non-null output valid for `len` values.
enum MvgpStatus mvgp_model_predict(const struct MvgpModel *model,
                                   const struct MvgpDataset *dataset,
                                   double *scores,
                                   double *labels,
                                   uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MVGP_H */
