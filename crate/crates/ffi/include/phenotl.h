#ifndef PHENOTL_H
#define PHENOTL_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PhenoStatus {
  PHENO_STATUS_OK = 0,
  PHENO_STATUS_NULL_POINTER = 1,
  PHENO_STATUS_INVALID_INPUT = 2,
  PHENO_STATUS_IO = 3,
  PHENO_STATUS_PARSE = 4,
  PHENO_STATUS_NOT_PSD = 5,
  PHENO_STATUS_NUMERICAL = 6,
  PHENO_STATUS_MODEL_FORMAT = 7,
  PHENO_STATUS_PANIC = 8,
} PhenoStatus;

/**
 * Opaque labeled dataset.
 */
typedef struct PhenoDataset PhenoDataset;

/**
 * Opaque fitted model.
 */
typedef struct PhenoModel PhenoModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread (empty if none).
 */
const char *pheno_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pheno_version(void);

/**
 * Loads a labeled CSV. `trait_column` may be null when the header has exactly one
 * non-numeric cell.
 *
 * # Safety
 * `path` and a non-null `trait_column` must be NUL-terminated strings; `out` must be writable.
 */
enum PhenoStatus pheno_dataset_load_csv(const char *path,
                                        const char *trait_column,
                                        struct PhenoDataset **out);

/**
 * Builds a dataset from a wavelength grid, a row-major reflectance matrix and labels.
 *
 * # Safety
 * `wavelengths` must hold `n_bands` values, `x` `n_samples * n_bands`, `y` `n_samples`.
 */
enum PhenoStatus pheno_dataset_from_arrays(const double *wavelengths,
                                           size_t n_bands,
                                           const double *x,
                                           const double *y,
                                           size_t n_samples,
                                           struct PhenoDataset **out);

/**
 * Simulates `n` labeled spectra. `config_path` may be null for the bundled config.
 *
 * # Safety
 * A non-null `config_path` must be a NUL-terminated string; `out` must be writable.
 */
enum PhenoStatus pheno_dataset_simulate(const char *config_path,
                                        size_t n,
                                        uint64_t seed,
                                        struct PhenoDataset **out);

/**
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t pheno_dataset_rows(const struct PhenoDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t pheno_dataset_cols(const struct PhenoDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void pheno_dataset_free(struct PhenoDataset *ds);

/**
 * PLSR with `components` latent components; 0 selects the count by 5-fold CV.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` must be writable.
 */
enum PhenoStatus pheno_train_plsr(const struct PhenoDataset *ds,
                                  size_t components,
                                  uint64_t seed,
                                  struct PhenoModel **out);

/**
 * MLP with the given hidden widths and default optimizer settings.
 *
 * # Safety
 * `ds` must be a live dataset handle, `hidden` must hold `n_hidden` values; `out` must be writable.
 */
enum PhenoStatus pheno_train_mlp(const struct PhenoDataset *ds,
                                 const size_t *hidden,
                                 size_t n_hidden,
                                 size_t max_epochs,
                                 uint64_t seed,
                                 struct PhenoModel **out);

/**
 * NNGP regression. A negative `noise` selects the noise variance by evidence.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` must be writable.
 */
enum PhenoStatus pheno_train_nngp(const struct PhenoDataset *ds,
                                  size_t depth,
                                  double sigma_w2,
                                  double sigma_b2,
                                  double noise,
                                  struct PhenoModel **out);

/**
 * Transfer GP from `source` to `target`. A negative `lambda` selects it by
 * evidence; `landmarks == 0` uses the exact kernel. Noise is always selected.
 *
 * # Safety
 * `source` and `target` must be live dataset handles; `out` must be writable.
 */
enum PhenoStatus pheno_train_transfer_gp(const struct PhenoDataset *source,
                                         const struct PhenoDataset *target,
                                         double lambda,
                                         size_t landmarks,
                                         uint64_t seed,
                                         size_t depth,
                                         double sigma_w2,
                                         double sigma_b2,
                                         struct PhenoModel **out);

/**
 * Fitted relatedness of a transfer-gp model.
 *
 * # Safety
 * `m` must be a live model handle; `out` must be writable.
 */
enum PhenoStatus pheno_model_lambda(const struct PhenoModel *m, double *out);

/**
 * Writes `n_samples` predictions for a row-major `n_samples × n_bands` matrix.
 *
 * # Safety
 * `x` must hold `n_samples * n_bands` values and `out` room for `n_samples`.
 */
enum PhenoStatus pheno_model_predict(const struct PhenoModel *m,
                                     const double *x,
                                     size_t n_samples,
                                     size_t n_bands,
                                     double *out);

/**
 * # Safety
 * `m` must be a live model handle and `path` a NUL-terminated string.
 */
enum PhenoStatus pheno_model_save(const struct PhenoModel *m, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum PhenoStatus pheno_model_load(const char *path, struct PhenoModel **out);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void pheno_model_free(struct PhenoModel *m);

/**
 * Infinite-width ReLU network kernel between two `d`-dimensional inputs.
 *
 * # Safety
 * `x` and `x2` must hold `d` values; `out` must be writable.
 */
enum PhenoStatus pheno_kernel_entry(const double *x,
                                    const double *x2,
                                    size_t d,
                                    size_t depth,
                                    double sigma_w2,
                                    double sigma_b2,
                                    double *out);

/**
 * # Safety
 * `y` and `y_hat` must hold `n` values; `out` must be writable.
 */
enum PhenoStatus pheno_rmse(const double *y, const double *y_hat, size_t n, double *out);

/**
 * # Safety
 * `y` and `y_hat` must hold `n` values; `out` must be writable.
 */
enum PhenoStatus pheno_r2(const double *y, const double *y_hat, size_t n, double *out);

/**
 * Number of bands the model expects, 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live model handle.
 */
size_t pheno_model_n_bands(const struct PhenoModel *m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHENOTL_H */
