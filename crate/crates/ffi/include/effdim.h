/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef EFFDIM_H
#define EFFDIM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum EffdimStatus {
  EFFDIM_STATUS_OK = 0,
  EFFDIM_STATUS_NULL_POINTER = 1,
  EFFDIM_STATUS_INVALID_ARGUMENT = 2,
  EFFDIM_STATUS_NUMERICAL = 3,
  EFFDIM_STATUS_IO = 4,
  EFFDIM_STATUS_PANIC = 5,
} EffdimStatus;

typedef enum EffdimActivation {
  EFFDIM_ACTIVATION_ELU = 0,
  EFFDIM_ACTIVATION_TANH = 1,
  EFFDIM_ACTIVATION_RELU = 2,
} EffdimActivation;

/**
 * Labelled inputs.
 */
typedef struct EffdimDataset EffdimDataset;

/**
 * Gaussian Bayesian linear model.
 */
typedef struct EffdimLinearModel EffdimLinearModel;

/**
 * Multilayer perceptron architecture and parameters.
 */
typedef struct EffdimMlp EffdimMlp;

/**
 * Generalization measures of one network; mirrors the library report.
 */
typedef struct EffdimMeasures {
  double n_eff_hessian;
  double z_used;
  double path_norm;
  double log_path_norm;
  double pac_bayes;
  double mag_pac_bayes;
  double occam_log_factor;
  double train_loss;
  double train_error;
  double test_loss;
  double test_error;
} EffdimMeasures;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *effdim_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into the library on the same thread.
 */
const char *effdim_last_error_message(void);

/**
 * `Σ λ/(λ+z)` over `len` eigenvalues. With `clamp_negative`, negative
 * eigenvalues count as zero.
 *
 * # Safety
 * `eigenvalues` must point to `len` doubles; `out` must be writable.
 */
enum EffdimStatus effdim_effective_dimensionality(const double *eigenvalues,
                                                  size_t len,
                                                  double z,
                                                  bool clamp_negative,
                                                  double *out);

/**
 * Eigenvalues of a symmetric `dim×dim` matrix, written in non-increasing order.
 *
 * # Safety
 * `matrix` must point to `dim*dim` doubles and `out` to `dim` writable doubles.
 */
enum EffdimStatus effdim_symmetric_eigenvalues(const double *matrix_data, size_t dim, double *out);

/**
 * Builds a Bayesian linear model from an `n×k` feature matrix.
 *
 * # Safety
 * `features` must point to `n*k` doubles; `out` must be writable.
 */
enum EffdimStatus effdim_linear_model_new(const double *features,
                                          size_t n,
                                          size_t k,
                                          double prior_variance,
                                          double noise_variance,
                                          struct EffdimLinearModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle from `effdim_linear_model_new` not yet freed.
 */
void effdim_linear_model_free(struct EffdimLinearModel *model);

/**
 * Posterior mean (`k` values) for `n` targets.
 *
 * # Safety
 * `targets` must point to `n` doubles and `mean_out` to `k` writable doubles.
 */
enum EffdimStatus effdim_linear_model_posterior_mean(const struct EffdimLinearModel *model,
                                                     const double *targets,
                                                     size_t n,
                                                     double *mean_out,
                                                     size_t k);

/**
 * Parameter-space posterior contraction `tr(prior) − tr(posterior)`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum EffdimStatus effdim_linear_model_contraction(const struct EffdimLinearModel *model,
                                                  double *out);

/**
 * Classification dataset from `n×dim` inputs and `n` class labels.
 *
 * # Safety
 * `inputs` must point to `n*dim` doubles, `labels` to `n` values.
 */
enum EffdimStatus effdim_dataset_new(const double *inputs,
                                     size_t n,
                                     size_t dim,
                                     const size_t *labels,
                                     struct EffdimDataset **out);

/**
 * Two interleaved spirals in the plane, two classes.
 *
 * # Safety
 * `out` must be writable.
 */
enum EffdimStatus effdim_dataset_two_spirals(size_t n,
                                             double noise,
                                             uint64_t seed,
                                             struct EffdimDataset **out);

/**
 * Two-dimensional Swiss roll, two classes.
 *
 * # Safety
 * `out` must be writable.
 */
enum EffdimStatus effdim_dataset_swiss_roll(size_t n,
                                            double noise,
                                            uint64_t seed,
                                            struct EffdimDataset **out);

/**
 * Number of examples, or 0 for NULL.
 *
 * # Safety
 * `data` must be NULL or a live handle.
 */
size_t effdim_dataset_len(const struct EffdimDataset *data);

/**
 * # Safety
 * `data` must be NULL or a handle not yet freed.
 */
void effdim_dataset_free(struct EffdimDataset *data);

/**
 * Network with `n_hidden` hidden layers of the given widths, initialized
 * from `seed`.
 *
 * # Safety
 * `hidden` must point to `n_hidden` values; `out` must be writable.
 */
enum EffdimStatus effdim_mlp_new(size_t input_dim,
                                 size_t output_dim,
                                 const size_t *hidden,
                                 size_t n_hidden,
                                 enum EffdimActivation activation,
                                 bool bias,
                                 uint64_t seed,
                                 struct EffdimMlp **out);

/**
 * Loads a network checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EffdimStatus effdim_mlp_load(const char *path, struct EffdimMlp **out);

/**
 * Writes a checkpoint readable by `effdim_mlp_load` and the CLI.
 *
 * # Safety
 * `mlp` must be a live handle and `path` a NUL-terminated string.
 */
enum EffdimStatus effdim_mlp_save(const struct EffdimMlp *mlp, const char *path);

/**
 * # Safety
 * `mlp` must be NULL or a handle not yet freed.
 */
void effdim_mlp_free(struct EffdimMlp *mlp);

/**
 * Number of parameters, or 0 for NULL.
 *
 * # Safety
 * `mlp` must be NULL or a live handle.
 */
size_t effdim_mlp_param_count(const struct EffdimMlp *mlp);

/**
 * Copies the flat parameter vector into `out` (`len` must equal the count).
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum EffdimStatus effdim_mlp_get_params(const struct EffdimMlp *mlp, double *out, size_t len);

/**
 * Full-batch Adam for `steps` steps; writes the last recorded loss.
 *
 * # Safety
 * `mlp` and `data` must be live handles; `final_loss` may be NULL.
 */
enum EffdimStatus effdim_mlp_train(struct EffdimMlp *mlp,
                                   const struct EffdimDataset *data,
                                   double learning_rate,
                                   size_t steps,
                                   uint64_t seed,
                                   double *final_loss);

/**
 * Fraction of correctly classified examples.
 *
 * # Safety
 * `mlp` and `data` must be live handles; `out` must be writable.
 */
enum EffdimStatus effdim_mlp_accuracy(const struct EffdimMlp *mlp,
                                      const struct EffdimDataset *data,
                                      double *out);

/**
 * All measures of the network. `z <= 0` selects `1/(n·prior_variance)`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum EffdimStatus effdim_mlp_measures(const struct EffdimMlp *mlp,
                                      const struct EffdimDataset *train,
                                      const struct EffdimDataset *test,
                                      double z,
                                      double prior_variance,
                                      uint64_t seed,
                                      bool compute_pac_bayes,
                                      struct EffdimMeasures *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EFFDIM_H */
