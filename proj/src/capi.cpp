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

#include "suq.h"

#include <cstring>
#include <string>
#include <vector>

#include "suq/bench.hpp"
#include "suq/measures.hpp"
#include "suq/methods.hpp"
#include "suq/metrics.hpp"

struct suq_predictions {
  suq::PredictionSet set;
};

struct suq_report {
  std::string dir;
  std::string json;
};

namespace {

thread_local std::string last_error;

suq_status to_status(suq::ErrorCode code) { return static_cast<suq_status>(static_cast<int>(code)); }

template <class F>
suq_status guarded(F&& fn) {
  try {
    fn();
    last_error.clear();
    return SUQ_OK;
  } catch (const suq::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return SUQ_ERR_IO;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return SUQ_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SUQ_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw suq::InvalidArgument(what);
}

suq::bench::ExperimentConfig load_config(const suq_options* o) {
  suq::bench::ExperimentConfig c;
  if (o && o->config_json) c = suq::bench::ExperimentConfig::from_json(o->config_json);
  else if (o && o->config_path) c = suq::bench::ExperimentConfig::from_file(o->config_path);
  if (o) {
    if (o->out_dir) c.output = o->out_dir;
    if (o->has_seed) c.seed = o->seed;
    if (o->jobs > 0) c.jobs = o->jobs;
  }
  c.validate();
  return c;
}

suq_status report(const suq::bench::CommandResult& r, suq_report** out) {
  *out = new suq_report{r.dir.generic_string(), r.json};
  return SUQ_OK;
}

}  // namespace

extern "C" {

const char* suq_version(void) { return "0.1.0"; }

const char* suq_last_error(void) { return last_error.c_str(); }

const char* suq_status_name(suq_status status) {
  switch (status) {
    case SUQ_OK: return "ok";
    case SUQ_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SUQ_ERR_SHAPE: return "shape mismatch";
    case SUQ_ERR_NUMERIC: return "numeric failure";
    case SUQ_ERR_DOMAIN: return "domain error";
    case SUQ_ERR_CONFIG: return "configuration error";
    case SUQ_ERR_PARSE: return "parse error";
    case SUQ_ERR_IO: return "I/O error";
    case SUQ_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

suq_status suq_predictions_read_csv(const char* path, const char* method, suq_predictions** out) {
  return guarded([&] {
    require(path && out, "path and out must not be NULL");
    *out = new suq_predictions{suq::read_predictions_csv_file(path, method ? method : "")};
  });
}

suq_status suq_predictions_write_csv(const suq_predictions* set, const char* path) {
  return guarded([&] {
    require(set && path, "set and path must not be NULL");
    suq::write_text_file(path, suq::predictions_csv(set->set));
  });
}

void suq_predictions_free(suq_predictions* set) { delete set; }

size_t suq_predictions_size(const suq_predictions* set) { return set ? set->set.size() : 0; }
size_t suq_predictions_draws(const suq_predictions* set) { return set ? set->set.draws() : 0; }
size_t suq_predictions_classes(const suq_predictions* set) { return set ? set->set.classes() : 0; }

suq_status suq_predictions_mean(const suq_predictions* set, double* out) {
  return guarded([&] {
    require(set && out, "set and out must not be NULL");
    const std::size_t c = set->set.classes();
    for (std::size_t i = 0; i < set->set.size(); ++i) {
      const auto m = suq::mean_prediction(set->set, i);
      std::memcpy(out + i * c, m.data(), c * sizeof(double));
    }
  });
}

suq_status suq_predictions_labels(const suq_predictions* set, int* predicted, int* truth) {
  return guarded([&] {
    require(set, "set must not be NULL");
    if (predicted) {
      const auto p = suq::predicted_labels(set->set);
      std::copy(p.begin(), p.end(), predicted);
    }
    if (truth) {
      const auto t = suq::true_labels(set->set);
      std::copy(t.begin(), t.end(), truth);
    }
  });
}

suq_status suq_predictions_uncertainty(const suq_predictions* set, const char* measure, double* out) {
  return guarded([&] {
    require(set && measure && out, "set, measure and out must not be NULL");
    const auto scores = suq::score_set(set->set, suq::measure_from_name(measure));
    const auto u = suq::oriented_uncertainty(scores);
    std::copy(u.begin(), u.end(), out);
  });
}

suq_status suq_ece(const double* confidence, const int* correct, size_t n, size_t bins, double* out) {
  return guarded([&] {
    require((confidence && correct) || n == 0, "inputs must not be NULL");
    require(out, "out must not be NULL");
    *out = suq::ece({confidence, n}, {correct, n}, bins).ece;
  });
}

suq_status suq_auroc(const double* positives, size_t n_pos, const double* negatives, size_t n_neg,
                     double* out) {
  return guarded([&] {
    require((positives || n_pos == 0) && (negatives || n_neg == 0) && out, "NULL argument");
    *out = suq::auroc({positives, n_pos}, {negatives, n_neg});
  });
}

suq_status suq_reject_curve(const double* uncertainty, const int* predicted, const int* truth, size_t n,
                            int balanced, double* values, double* auarc) {
  return guarded([&] {
    require(uncertainty && predicted && truth, "inputs must not be NULL");
    const auto curve = suq::accuracy_reject_curve(
        {uncertainty, n}, {predicted, n}, {truth, n},
        balanced ? suq::CurveMetric::kBalancedAccuracy : suq::CurveMetric::kAccuracy);
    if (values)
      for (std::size_t i = 0; i < curve.points.size(); ++i) values[i] = curve.points[i].value;
    if (auarc) *auarc = curve.auarc;
  });
}

const char* suq_report_dir(const suq_report* r) { return r ? r->dir.c_str() : ""; }
const char* suq_report_json(const suq_report* r) { return r ? r->json.c_str() : ""; }
void suq_report_free(suq_report* r) { delete r; }

suq_status suq_generate(const suq_options* options, suq_report** out) {
  return guarded([&] {
    require(out, "out must not be NULL");
    report(suq::bench::cmd_generate(load_config(options)), out);
  });
}

suq_status suq_run(const suq_options* options, suq_report** out) {
  return guarded([&] {
    require(out, "out must not be NULL");
    report(suq::bench::cmd_run(load_config(options)), out);
  });
}

suq_status suq_evaluate(const suq_options* options, const char* const* inputs, size_t n_inputs,
                        suq_report** out) {
  return guarded([&] {
    require(out && (inputs || n_inputs == 0), "NULL argument");
    std::vector<std::filesystem::path> paths(inputs, inputs + n_inputs);
    report(suq::bench::cmd_evaluate(load_config(options), paths), out);
  });
}

suq_status suq_noise_suite(const suq_options* options, suq_report** out) {
  return guarded([&] {
    require(out, "out must not be NULL");
    report(suq::bench::cmd_noise_suite(load_config(options)), out);
  });
}

suq_status suq_rank(const suq_options* options, const char* const* run_dirs, size_t n_runs, suq_report** out) {
  return guarded([&] {
    require(out && (run_dirs || n_runs == 0), "NULL argument");
    std::vector<std::filesystem::path> paths(run_dirs, run_dirs + n_runs);
    report(suq::bench::cmd_rank(load_config(options), paths), out);
  });
}

suq_status suq_compare_measures(const suq_options* options, const char* run_dir, suq_report** out) {
  return guarded([&] {
    require(out, "out must not be NULL");
    report(suq::bench::cmd_compare_measures(load_config(options), run_dir ? run_dir : ""), out);
  });
}

suq_status suq_slide_suite(const suq_options* options, suq_report** out) {
  return guarded([&] {
    require(out, "out must not be NULL");
    report(suq::bench::cmd_slide_suite(load_config(options)), out);
  });
}

suq_status suq_verify_manifest(const char* run_dir) {
  return guarded([&] {
    require(run_dir, "run_dir must not be NULL");
    const auto problems = suq::bench::verify_manifest(run_dir);
    if (!problems.empty()) {
      std::string msg = "manifest check failed:";
      for (const auto& p : problems) msg += " " + p + ";";
      throw suq::IoError(msg);
    }
  });
}

}  // extern "C"
