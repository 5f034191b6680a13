/*
 * Copyright 2026 The suq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface of the suq library. Every function returns a suq_status;
 * on failure suq_last_error() describes the problem (thread-local). Objects
 * are opaque handles released with their _free function. */

#ifndef SUQ_H_
#define SUQ_H_

#include <stddef.h>
#include <stdint.h>

#if defined(SUQ_BUILDING_LIBRARY)
#define SUQ_API __attribute__((visibility("default")))
#else
#define SUQ_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum suq_status {
  SUQ_OK = 0,
  SUQ_ERR_INVALID_ARGUMENT = 1,
  SUQ_ERR_SHAPE = 2,
  SUQ_ERR_NUMERIC = 3,
  SUQ_ERR_DOMAIN = 4,
  SUQ_ERR_CONFIG = 5,
  SUQ_ERR_PARSE = 6,
  SUQ_ERR_IO = 7,
  SUQ_ERR_INTERNAL = 8
} suq_status;

SUQ_API const char* suq_version(void);
SUQ_API const char* suq_last_error(void);
SUQ_API const char* suq_status_name(suq_status status);

/* Prediction sets (CSV schema sample_id,slide_id,center_id,label,draw,p0..). */
typedef struct suq_predictions suq_predictions;

SUQ_API suq_status suq_predictions_read_csv(const char* path, const char* method, suq_predictions** out);
SUQ_API suq_status suq_predictions_write_csv(const suq_predictions* set, const char* path);
SUQ_API void suq_predictions_free(suq_predictions* set);
SUQ_API size_t suq_predictions_size(const suq_predictions* set);
SUQ_API size_t suq_predictions_draws(const suq_predictions* set);
SUQ_API size_t suq_predictions_classes(const suq_predictions* set);
/* out receives size() * classes() values. */
SUQ_API suq_status suq_predictions_mean(const suq_predictions* set, double* out);
/* predicted and truth receive size() values each; either may be NULL. */
SUQ_API suq_status suq_predictions_labels(const suq_predictions* set, int* predicted, int* truth);
/* measure: "confidence", "normed_entropy" or "variance". out receives size()
 * values oriented so that larger means more uncertain. */
SUQ_API suq_status suq_predictions_uncertainty(const suq_predictions* set, const char* measure, double* out);

/* Metrics. */
SUQ_API suq_status suq_ece(const double* confidence, const int* correct, size_t n, size_t bins, double* out);
SUQ_API suq_status suq_auroc(const double* positives, size_t n_pos, const double* negatives, size_t n_neg,
                             double* out);
/* values receives n curve values (rejection counts 0..n-1); may be NULL. */
SUQ_API suq_status suq_reject_curve(const double* uncertainty, const int* predicted, const int* truth, size_t n,
                                    int balanced, double* values, double* auarc);

/* Experiment commands. Unset fields (NULL / 0) keep the configured value;
 * config_json takes precedence over config_path. A NULL options pointer
 * runs with the built-in defaults. */
typedef struct suq_options {
  const char* config_path;
  const char* config_json;
  const char* out_dir;
  int has_seed;
  uint64_t seed;
  int jobs;
} suq_options;

typedef struct suq_report suq_report;

SUQ_API const char* suq_report_dir(const suq_report* report);
SUQ_API const char* suq_report_json(const suq_report* report);
SUQ_API void suq_report_free(suq_report* report);

SUQ_API suq_status suq_generate(const suq_options* options, suq_report** out);
SUQ_API suq_status suq_run(const suq_options* options, suq_report** out);
SUQ_API suq_status suq_evaluate(const suq_options* options, const char* const* inputs, size_t n_inputs,
                                suq_report** out);
SUQ_API suq_status suq_noise_suite(const suq_options* options, suq_report** out);
SUQ_API suq_status suq_rank(const suq_options* options, const char* const* run_dirs, size_t n_runs,
                            suq_report** out);
SUQ_API suq_status suq_compare_measures(const suq_options* options, const char* run_dir, suq_report** out);
SUQ_API suq_status suq_slide_suite(const suq_options* options, suq_report** out);
/* SUQ_OK when run.json lists every file with a matching SHA-256; the
 * problems are reported through suq_last_error() otherwise. */
SUQ_API suq_status suq_verify_manifest(const char* run_dir);

#ifdef __cplusplus
}
#endif

#endif /* SUQ_H_ */
