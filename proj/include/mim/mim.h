/* Copyright 2026 The MiM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef MIM_MIM_H_
#define MIM_MIM_H_

/* C interface to the MiM library. Every call returns a status code; on
 * failure the message is available from mim_last_error() on the same thread.
 * Strings returned through char** out-parameters are owned by the caller and
 * released with mim_string_free(). Handles are released with their
 * matching _destroy function; passing NULL to a destroy function is a no-op.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MIM_API __declspec(dllexport)
#else
#define MIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mim_status {
  MIM_OK = 0,
  MIM_ERR_INVALID_ARGUMENT = 1,
  MIM_ERR_SHAPE = 2,
  MIM_ERR_NUMERIC = 3,
  MIM_ERR_IO = 4,
  MIM_ERR_CONFIG = 5,
  MIM_ERR_NOT_FOUND = 6,
  MIM_ERR_INTERNAL = 7
} mim_status;

typedef enum mim_split {
  MIM_SPLIT_TRAIN = 0,
  MIM_SPLIT_TEST = 1,
  MIM_SPLIT_ALL = 2
} mim_split;

typedef enum mim_predictor {
  MIM_PREDICTOR_MODEL = 0,
  /* Ground truth echoed back as the prediction. */
  MIM_PREDICTOR_GT_ECHO = 1,
  /* Probability 0 everywhere. */
  MIM_PREDICTOR_ZEROS = 2
} mim_predictor;

typedef struct mim_model mim_model;
typedef struct mim_dataset mim_dataset;

MIM_API const char* mim_version(void);
/* Stable lower-case name, e.g. "shape" for MIM_ERR_SHAPE. */
MIM_API const char* mim_status_name(mim_status status);
/* Message of the last failed call on this thread; "" when none. */
MIM_API const char* mim_last_error(void);
MIM_API void mim_string_free(char* str);

/* NaN/Inf checks on every op output (on by default). */
MIM_API void mim_set_finite_checks(int enabled);
/* Worker cap for internal parallelism (MIM_THREADS). */
MIM_API int mim_max_threads(void);

/* ---- model ------------------------------------------------------------ */

/* config_json: model config object, NULL or "" for defaults. */
MIM_API mim_status mim_model_create(const char* config_json, uint64_t seed, mim_model** out);
/* Loads <prefix>.json / <prefix>.bin written by mim_model_save or training. */
MIM_API mim_status mim_model_load(const char* checkpoint_prefix, mim_model** out);
MIM_API mim_status mim_model_save(const mim_model* model, const char* checkpoint_prefix);
MIM_API void mim_model_destroy(mim_model* model);
MIM_API mim_status mim_model_config(const mim_model* model, char** config_json);
MIM_API mim_status mim_model_parameter_count(const mim_model* model, int64_t* count);
/* Target probabilities for 8-bit grayscale images, batch x height x width,
 * row-major. probs receives batch * height * width values in eval mode. */
MIM_API mim_status mim_model_predict(mim_model* model, const uint8_t* images, int64_t batch,
                                     int64_t height, int64_t width, double* probs);

/* ---- data ------------------------------------------------------------- */

/* Writes a synthetic dataset under root. synth_json: generator config,
 * NULL for defaults. */
MIM_API mim_status mim_synth_write(const char* root, const char* synth_json, int64_t count,
                                   double train_fraction, mim_dataset** out);
/* Opens images/ + masks/ under root. size > 0 resizes to size x size on
 * load; bilinear selects bilinear (1) or nearest (0) image resizing. */
MIM_API mim_status mim_dataset_open(const char* root, uint64_t seed, double train_fraction,
                                    int64_t size, int bilinear, mim_dataset** out);
MIM_API void mim_dataset_destroy(mim_dataset* dataset);
MIM_API mim_status mim_dataset_manifest(const mim_dataset* dataset, char** manifest_json);
MIM_API mim_status mim_dataset_count(const mim_dataset* dataset, mim_split split, int64_t* count);

/* ---- training and evaluation ----------------------------------------- */

/* Trains on the train split. train_json: training config, NULL for
 * defaults. out_dir receives model.{json,bin}, history.csv and step
 * checkpoints. result_json (optional) receives a summary. */
MIM_API mim_status mim_train(mim_model* model, const mim_dataset* dataset,
                             const char* train_json, const char* out_dir, char** result_json);
/* Metrics report over a split. options_json keys: threshold, roc_thresholds,
 * radius, connectivity. model may be NULL for the reference predictors.
 * roc_csv_path (optional) receives the ROC curve. */
MIM_API mim_status mim_evaluate(mim_model* model, const mim_dataset* dataset, mim_split split,
                                mim_predictor predictor, const char* options_json,
                                const char* roc_csv_path, char** report_json);
/* Writes <out_dir>/<id>.pgm binary masks (0/255) for a split. */
MIM_API mim_status mim_predict_masks(mim_model* model, const mim_dataset* dataset,
                                     mim_split split, double threshold, const char* out_dir,
                                     char** result_json);

/* ---- complexity and timing ------------------------------------------- */

/* Analytic and measured flops for one height x width image. */
MIM_API mim_status mim_flops(mim_model* model, int64_t height, int64_t width, char** report_json);
/* Times eval-mode forward passes on random images. */
MIM_API mim_status mim_bench(mim_model* model, int64_t height, int64_t width, int64_t batch,
                             int64_t warmup, int64_t repeat, uint64_t seed, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* MIM_MIM_H_ */
