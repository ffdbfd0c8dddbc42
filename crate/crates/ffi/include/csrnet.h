#ifndef CSRNET_H
#define CSRNET_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsrnetStatus {
  CSRNET_STATUS_OK = 0,
  CSRNET_STATUS_INVALID_ARGUMENT = 1,
  CSRNET_STATUS_STATE = 2,
  CSRNET_STATUS_IO = 3,
  CSRNET_STATUS_FORMAT = 4,
  CSRNET_STATUS_CONFIG = 5,
  CSRNET_STATUS_NULL_POINTER = 6,
  CSRNET_STATUS_PANIC = 7,
} CsrnetStatus;

typedef enum CsrnetBackend {
  CSRNET_BACKEND_SPARSE = 0,
  CSRNET_BACKEND_MASKED = 1,
} CsrnetBackend;

typedef enum CsrnetActivation {
  CSRNET_ACTIVATION_NONE = 0,
  CSRNET_ACTIVATION_RELU = 1,
} CsrnetActivation;

/**
 * Opaque dataset handle.
 */
typedef struct CsrnetDataset CsrnetDataset;

/**
 * Opaque model handle.
 */
typedef struct CsrnetModel CsrnetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *csrnet_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *csrnet_last_error(void);

/**
 * `backend` is a [`CsrnetBackend`] value.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum CsrnetStatus csrnet_model_new(uint32_t backend, struct CsrnetModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void csrnet_model_free(struct CsrnetModel *model);

/**
 * Appends a sparse layer. `act` is a [`CsrnetActivation`] value;
 * `momentum` 0 selects plain gradient descent.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum CsrnetStatus csrnet_model_add_sparse(struct CsrnetModel *model,
                                          size_t units,
                                          double density,
                                          uint32_t act,
                                          double momentum,
                                          bool nesterov);

/**
 * # Safety
 * `model` must be a live handle.
 */
enum CsrnetStatus csrnet_model_add_dense(struct CsrnetModel *model,
                                         size_t units,
                                         uint32_t act,
                                         double momentum,
                                         bool nesterov);

/**
 * # Safety
 * `model` must be a live handle.
 */
enum CsrnetStatus csrnet_model_add_batchnorm(struct CsrnetModel *model);

/**
 * # Safety
 * `model` must be a live handle.
 */
enum CsrnetStatus csrnet_model_add_dropout(struct CsrnetModel *model, double p);

/**
 * # Safety
 * `model` must be a live handle.
 */
enum CsrnetStatus csrnet_model_compile(struct CsrnetModel *model,
                                       size_t input_size,
                                       size_t batch_size,
                                       uint64_t seed);

/**
 * Inference-mode forward pass of `cols` examples. `x` holds
 * `input_size × cols` values, `out` room for `output_size × cols`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum CsrnetStatus csrnet_model_feedforward(struct CsrnetModel *model,
                                           const float *x,
                                           size_t rows,
                                           size_t cols,
                                           float *out,
                                           size_t out_len);

/**
 * Output width of a compiled model.
 *
 * # Safety
 * `model` must be a live handle, `out` valid.
 */
enum CsrnetStatus csrnet_model_output_size(const struct CsrnetModel *model, size_t *out);

/**
 * Global weight density (stored weights over dense weight count).
 *
 * # Safety
 * `model` must be a live handle, `out` valid.
 */
enum CsrnetStatus csrnet_model_density(const struct CsrnetModel *model, double *out);

/**
 * Number of layers in a compiled model.
 *
 * # Safety
 * `model` must be a live handle, `out` valid.
 */
enum CsrnetStatus csrnet_model_layer_count(const struct CsrnetModel *model, size_t *out);

/**
 * Copies layer `layer`'s weights as a dense `n_out × n_in` matrix.
 * `*written` receives the element count; pass a null `out` to query it.
 *
 * # Safety
 * `out` must hold `out_len` floats when non-null; `written` must be valid.
 */
enum CsrnetStatus csrnet_model_layer_weights(const struct CsrnetModel *model,
                                             size_t layer,
                                             float *out,
                                             size_t out_len,
                                             size_t *written);

/**
 * Gaussian-blob classification data.
 *
 * # Safety
 * `out` must be a valid handle slot.
 */
enum CsrnetStatus csrnet_dataset_synthetic(size_t classes,
                                           size_t features,
                                           size_t train_per_class,
                                           size_t test_per_class,
                                           double spread,
                                           uint64_t seed,
                                           struct CsrnetDataset **out);

/**
 * Dataset from caller arrays: `x_*` are `features × n` row-major, labels
 * are class indices below `classes`.
 *
 * # Safety
 * Arrays must be valid for the stated lengths.
 */
enum CsrnetStatus csrnet_dataset_from_arrays(size_t features,
                                             size_t classes,
                                             const float *x_train,
                                             const uint32_t *labels_train,
                                             size_t n_train,
                                             const float *x_test,
                                             const uint32_t *labels_test,
                                             size_t n_test,
                                             struct CsrnetDataset **out);

/**
 * Binary CIFAR-10 from a directory holding the `data_batch_*.bin` files.
 *
 * # Safety
 * `dir` must be a NUL-terminated string, `out` a valid handle slot.
 */
enum CsrnetStatus csrnet_dataset_load_cifar10(const char *dir, struct CsrnetDataset **out);

/**
 * # Safety
 * `ds` must come from this library and not be used afterwards.
 */
void csrnet_dataset_free(struct CsrnetDataset *ds);

/**
 * Trains with a constant learning rate and softmax cross-entropy.
 * Optional `train_loss` / `test_acc` receive one value per epoch.
 *
 * # Safety
 * Handles must be live; non-null metric arrays must hold `epochs` values.
 */
enum CsrnetStatus csrnet_train(struct CsrnetModel *model,
                               const struct CsrnetDataset *ds,
                               size_t epochs,
                               size_t batch_size,
                               double lr,
                               uint64_t seed,
                               bool shuffle,
                               double *train_loss,
                               double *test_acc);

/**
 * # Safety
 * `model` must be a live handle, `dir` a NUL-terminated string.
 */
enum CsrnetStatus csrnet_model_save(const struct CsrnetModel *model, const char *dir);

/**
 * # Safety
 * `dir` must be a NUL-terminated string, `out` a valid handle slot.
 */
enum CsrnetStatus csrnet_model_load(const char *dir, struct CsrnetModel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSRNET_H */
