#ifndef CSC_H
#define CSC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum CscStatus {
  CSC_STATUS_OK = 0,
  CSC_STATUS_NULL_POINTER = 1,
  CSC_STATUS_INVALID_CONFIG = 2,
  CSC_STATUS_INVALID_INPUT = 3,
  CSC_STATUS_DIMENSION_MISMATCH = 4,
  CSC_STATUS_NUMERICAL = 5,
  CSC_STATUS_IO = 6,
  CSC_STATUS_PARSE = 7,
  CSC_STATUS_PANIC = 8,
} CscStatus;

/*
 Residual connection pattern of the backbone.
 */
typedef enum CscResidual {
  CSC_RESIDUAL_NONE = 0,
  CSC_RESIDUAL_BLOCK = 1,
  CSC_RESIDUAL_FULL = 2,
} CscResidual;

/*
 Incomplete dataset: values, observation mask and optional labels.
 */
typedef struct CscDataset CscDataset;

/*
 Trained contrastive or masked-autoencoder model.
 */
typedef struct CscModel CscModel;

/*
 Architecture and optimisation settings for contrastive training.
 */
typedef struct CscTrainOptions {
  size_t depth;
  size_t width;
  size_t embed_dim;
  size_t head_hidden;
  size_t head_out;
  enum CscResidual residual;
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  double temperature;
  uint64_t seed;
} CscTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null if none.

 The pointer stays valid until the next failing call on the same thread.
 */
const char *csc_last_error(void);

/*
 Library version as a static nul-terminated string.
 */
const char *csc_version(void);

/*
 Draws a synthetic union-of-subspaces dataset with noise `sigma` and
 per-entry sampling rate `rho`.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum CscStatus csc_dataset_generate(size_t k,
                                    size_t r,
                                    size_t d,
                                    size_t n_total,
                                    double sigma,
                                    double rho,
                                    uint64_t seed,
                                    struct CscDataset **out);

/*
 Builds a dataset from sample-major `values` and `mask` buffers of
 `d * n` entries. Values at unobserved entries are ignored. `labels` may
 be null.

 # Safety
 Non-null buffers must hold `d * n` (values, mask) or `n` (labels) elements.
 */
enum CscStatus csc_dataset_new(size_t d,
                               size_t n,
                               const double *values,
                               const double *mask,
                               const size_t *labels,
                               struct CscDataset **out);

/*
 Reads a dataset directory written by [`csc_dataset_save`] or the CLI.

 # Safety
 `path` must be a nul-terminated string and `out` writable.
 */
enum CscStatus csc_dataset_load(const char *path, struct CscDataset **out);

/*
 # Safety
 `ds` must be a live handle and `path` a nul-terminated string.
 */
enum CscStatus csc_dataset_save(const struct CscDataset *ds, const char *path);

/*
 Ambient dimension, or 0 for a null handle.

 # Safety
 `ds` must be null or a live handle.
 */
size_t csc_dataset_dim(const struct CscDataset *ds);

/*
 Number of samples, or 0 for a null handle.

 # Safety
 `ds` must be null or a live handle.
 */
size_t csc_dataset_len(const struct CscDataset *ds);

/*
 Copies the ground-truth labels into `out` (`len` must equal the sample count).

 # Safety
 `ds` must be a live handle and `out` must hold `len` elements.
 */
enum CscStatus csc_dataset_labels(const struct CscDataset *ds, size_t *out, size_t len);

/*
 # Safety
 `ds` must be null or a handle not yet freed.
 */
void csc_dataset_free(struct CscDataset *ds);

/*
 Library defaults for a `input_dim`-dimensional dataset.
 */
struct CscTrainOptions csc_train_options_default(size_t input_dim);

/*
 Trains a contrastive model on `ds`. `loss_trace` may be null; otherwise
 it receives one mean loss per epoch and must hold `opts.epochs` entries.

 # Safety
 `ds` and `opts` must be valid, `out` writable, and `loss_trace` null or
 large enough.
 */
enum CscStatus csc_model_train(const struct CscDataset *ds,
                               const struct CscTrainOptions *opts,
                               double *loss_trace,
                               struct CscModel **out);

/*
 Reads a `model.json` checkpoint of either kind.

 # Safety
 `path` must be a nul-terminated string and `out` writable.
 */
enum CscStatus csc_model_load(const char *path, struct CscModel **out);

/*
 # Safety
 `model` must be a live handle and `path` a nul-terminated string.
 */
enum CscStatus csc_model_save(const struct CscModel *model, const char *path);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void csc_model_free(struct CscModel *model);

/*
 Dimension of the representation produced by [`csc_model_embed`], or 0
 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t csc_model_embed_dim(const struct CscModel *model);

/*
 Writes the representation of every sample, sample-major, into `out`
 (`len` = embed_dim × sample count).

 # Safety
 Handles must be live and `out` must hold `len` elements.
 */
enum CscStatus csc_model_embed(const struct CscModel *model,
                               const struct CscDataset *ds,
                               double *out,
                               size_t len);

/*
 Default lasso weight relative to the per-column maximum.
 */
double csc_ssc_lambda_default(void);

/*
 Sparse subspace clustering of `n` sample-major `d`-dimensional points
 into `k` groups; labels in `0..k` go to `labels` (`n` entries).

 # Safety
 `points` must hold `d * n` elements and `labels` `n` elements.
 */
enum CscStatus csc_cluster(const double *points,
                           size_t d,
                           size_t n,
                           size_t k,
                           double lambda_rel,
                           uint64_t seed,
                           size_t *labels);

/*
 SSC on the zero-filled observations of `ds`.

 # Safety
 `ds` must be a live handle and `labels` must hold `len` elements.
 */
enum CscStatus csc_cluster_zero_filled(const struct CscDataset *ds,
                                       size_t k,
                                       double lambda_rel,
                                       uint64_t seed,
                                       size_t *labels,
                                       size_t len);

/*
 Clustering error (fraction misassigned after the best label matching).

 # Safety
 `pred` and `truth` must hold `n` elements; `error` must be writable.
 */
enum CscStatus csc_score(const size_t *pred, const size_t *truth, size_t n, double *error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSC_H */
