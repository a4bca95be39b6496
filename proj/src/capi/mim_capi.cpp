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

#include "mim/mim.h"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "complexity/complexity.h"
#include "data/dataset.h"
#include "json.hpp"
#include "metrics/metrics.h"
#include "model/mim_model.h"
#include "tensor/checkpoint.h"
#include "tensor/ops.h"
#include "tensor/parallel.h"
#include "tensor/random.h"
#include "train/train.h"

struct mim_model {
  std::unique_ptr<mim::model::MimModel> model;
};

struct mim_dataset {
  std::filesystem::path root;
  mim::data::Manifest manifest;
  mim::data::LoadOptions load;
};

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

thread_local std::string t_last_error;

mim_status FromCode(mim::Error::Code code) {
  switch (code) {
    case mim::Error::Code::kInvalidArgument: return MIM_ERR_INVALID_ARGUMENT;
    case mim::Error::Code::kShape: return MIM_ERR_SHAPE;
    case mim::Error::Code::kNumeric: return MIM_ERR_NUMERIC;
    case mim::Error::Code::kIo: return MIM_ERR_IO;
    case mim::Error::Code::kConfig: return MIM_ERR_CONFIG;
    case mim::Error::Code::kNotFound: return MIM_ERR_NOT_FOUND;
    case mim::Error::Code::kInternal: return MIM_ERR_INTERNAL;
  }
  return MIM_ERR_INTERNAL;
}

template <typename Fn>
mim_status Guard(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return MIM_OK;
  } catch (const mim::Error& e) {
    t_last_error = e.what();
    return FromCode(e.code());
  } catch (const json::exception& e) {
    t_last_error = std::string("invalid JSON: ") + e.what();
    return MIM_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    t_last_error = "out of memory";
    return MIM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return MIM_ERR_INTERNAL;
  } catch (...) {
    t_last_error = "unknown error";
    return MIM_ERR_INTERNAL;
  }
}

void NotNull(const void* p, const char* what) {
  if (!p) mim::Fail(mim::Error::Code::kInvalidArgument, std::string(what) + " is NULL");
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void Emit(char** out, const json& j) {
  if (out) *out = CopyString(j.dump());
}

json ParseObject(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    mim::Fail(mim::Error::Code::kConfig, std::string(what) + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) mim::Fail(mim::Error::Code::kConfig, std::string(what) + " must be a JSON object");
  return j;
}

std::vector<std::string> SplitIds(const mim_dataset& d, mim_split split) {
  switch (split) {
    case MIM_SPLIT_TRAIN: return d.manifest.split.train;
    case MIM_SPLIT_TEST: return d.manifest.split.test;
    case MIM_SPLIT_ALL: {
      std::vector<std::string> ids;
      for (const auto& e : d.manifest.samples) ids.push_back(e.id);
      return ids;
    }
  }
  mim::Fail(mim::Error::Code::kInvalidArgument, "unknown split");
}

std::vector<mim::data::Sample> LoadIds(const mim_dataset& d, mim_split split) {
  return mim::data::LoadSplit(d.root, d.manifest, SplitIds(d, split), d.load);
}

mim::metrics::EvaluateOptions EvalOptions(const json& j) {
  mim::metrics::EvaluateOptions o;
  for (const auto& [key, value] : j.items()) {
    if (key == "threshold") o.threshold = value.get<double>();
    else if (key == "roc_thresholds") o.roc_thresholds = value.get<int64_t>();
    else if (key == "radius") o.match.radius = value.get<double>();
    else if (key == "connectivity") o.match.connectivity = value.get<int>();
    else mim::Fail(mim::Error::Code::kConfig, "unknown eval option '" + key + "'");
  }
  if (!(o.threshold >= 0.0 && o.threshold <= 1.0)) {
    mim::Fail(mim::Error::Code::kConfig, "threshold must lie in [0, 1]");
  }
  if (o.roc_thresholds < 2) mim::Fail(mim::Error::Code::kConfig, "roc_thresholds must be at least 2");
  if (!(o.match.radius > 0)) mim::Fail(mim::Error::Code::kConfig, "radius must be positive");
  if (o.match.connectivity != 4 && o.match.connectivity != 8) {
    mim::Fail(mim::Error::Code::kConfig, "connectivity must be 4 or 8");
  }
  return o;
}

std::vector<mim::metrics::ProbMap> Predict(mim_model* model, mim_predictor predictor,
                                           const std::vector<mim::data::Sample>& samples) {
  switch (predictor) {
    case MIM_PREDICTOR_MODEL:
      NotNull(model, "model");
      return mim::train::PredictModel(*model->model, samples);
    case MIM_PREDICTOR_GT_ECHO: return mim::train::PredictGtEcho(samples);
    case MIM_PREDICTOR_ZEROS: return mim::train::PredictZeros(samples);
  }
  mim::Fail(mim::Error::Code::kInvalidArgument, "unknown predictor");
}

void CreateDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) mim::Fail(mim::Error::Code::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

extern "C" {

const char* mim_version(void) { return "0.1.0"; }

const char* mim_status_name(mim_status status) {
  switch (status) {
    case MIM_OK: return "ok";
    case MIM_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MIM_ERR_SHAPE: return "shape";
    case MIM_ERR_NUMERIC: return "numeric";
    case MIM_ERR_IO: return "io";
    case MIM_ERR_CONFIG: return "config";
    case MIM_ERR_NOT_FOUND: return "not_found";
    case MIM_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* mim_last_error(void) { return t_last_error.c_str(); }

void mim_string_free(char* str) { std::free(str); }

void mim_set_finite_checks(int enabled) { mim::SetFiniteChecks(enabled != 0); }

int mim_max_threads(void) { return mim::MaxThreads(); }

mim_status mim_model_create(const char* config_json, uint64_t seed, mim_model** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = nullptr;
    const mim::model::MimConfig config =
        mim::model::MimConfig::FromJson(ParseObject(config_json, "model config"));
    auto handle = std::make_unique<mim_model>();
    handle->model = std::make_unique<mim::model::MimModel>(config, seed);
    *out = handle.release();
  });
}

mim_status mim_model_load(const char* checkpoint_prefix, mim_model** out) {
  return Guard([&] {
    NotNull(checkpoint_prefix, "checkpoint_prefix");
    NotNull(out, "out");
    *out = nullptr;
    mim::Checkpoint ckpt = mim::LoadCheckpoint(checkpoint_prefix);
    if (!ckpt.metadata.contains("config")) {
      mim::Fail(mim::Error::Code::kConfig,
                std::string("checkpoint ") + checkpoint_prefix + " has no model config");
    }
    const mim::model::MimConfig config = mim::model::MimConfig::FromJson(ckpt.metadata["config"]);
    auto handle = std::make_unique<mim_model>();
    handle->model = std::make_unique<mim::model::MimModel>(config, 0);
    handle->model->Restore(ckpt);
    *out = handle.release();
  });
}

mim_status mim_model_save(const mim_model* model, const char* checkpoint_prefix) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(checkpoint_prefix, "checkpoint_prefix");
    mim::SaveCheckpoint(checkpoint_prefix, model->model->ToCheckpoint());
  });
}

void mim_model_destroy(mim_model* model) { delete model; }

mim_status mim_model_config(const mim_model* model, char** config_json) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(config_json, "config_json");
    Emit(config_json, model->model->config().ToJson());
  });
}

mim_status mim_model_parameter_count(const mim_model* model, int64_t* count) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(count, "count");
    *count = model->model->ParameterCount();
  });
}

mim_status mim_model_predict(mim_model* model, const uint8_t* images, int64_t batch,
                             int64_t height, int64_t width, double* probs) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(images, "images");
    NotNull(probs, "probs");
    if (batch < 1 || height < 1 || width < 1) {
      mim::Fail(mim::Error::Code::kInvalidArgument, "batch, height and width must be positive");
    }
    std::vector<mim::data::Sample> samples(batch);
    const int64_t plane = height * width;
    for (int64_t b = 0; b < batch; ++b) {
      samples[b].image = {height, width, std::vector<uint8_t>(images + b * plane, images + (b + 1) * plane)};
    }
    auto maps = mim::train::PredictModel(*model->model, samples);
    for (int64_t b = 0; b < batch; ++b) {
      std::copy(maps[b].values.begin(), maps[b].values.end(), probs + b * plane);
    }
  });
}

mim_status mim_synth_write(const char* root, const char* synth_json, int64_t count,
                           double train_fraction, mim_dataset** out) {
  return Guard([&] {
    NotNull(root, "root");
    if (out) *out = nullptr;
    if (count < 2) mim::Fail(mim::Error::Code::kInvalidArgument, "count must be at least 2");
    const mim::data::SynthConfig config =
        mim::data::SynthConfig::FromJson(ParseObject(synth_json, "synth config"), {});
    auto handle = std::make_unique<mim_dataset>();
    handle->root = root;
    handle->manifest = mim::data::WriteSyntheticDataset(root, config, count, train_fraction);
    if (out) *out = handle.release();
  });
}

mim_status mim_dataset_open(const char* root, uint64_t seed, double train_fraction, int64_t size,
                            int bilinear, mim_dataset** out) {
  return Guard([&] {
    NotNull(root, "root");
    NotNull(out, "out");
    *out = nullptr;
    if (size < 0) mim::Fail(mim::Error::Code::kInvalidArgument, "size must be non-negative");
    auto handle = std::make_unique<mim_dataset>();
    handle->root = root;
    handle->manifest = mim::data::OpenDataset(root, seed, train_fraction);
    handle->load.size = size;
    handle->load.image_resize = bilinear ? mim::data::Resize::kBilinear : mim::data::Resize::kNearest;
    *out = handle.release();
  });
}

void mim_dataset_destroy(mim_dataset* dataset) { delete dataset; }

mim_status mim_dataset_manifest(const mim_dataset* dataset, char** manifest_json) {
  return Guard([&] {
    NotNull(dataset, "dataset");
    NotNull(manifest_json, "manifest_json");
    Emit(manifest_json, dataset->manifest.ToJson());
  });
}

mim_status mim_dataset_count(const mim_dataset* dataset, mim_split split, int64_t* count) {
  return Guard([&] {
    NotNull(dataset, "dataset");
    NotNull(count, "count");
    *count = static_cast<int64_t>(SplitIds(*dataset, split).size());
  });
}

mim_status mim_train(mim_model* model, const mim_dataset* dataset, const char* train_json,
                     const char* out_dir, char** result_json) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(dataset, "dataset");
    const mim::train::TrainConfig config =
        mim::train::TrainConfig::FromJson(ParseObject(train_json, "train config"), {});
    const fs::path dir = out_dir ? fs::path(out_dir) : fs::path();
    auto samples = LoadIds(*dataset, MIM_SPLIT_TRAIN);
    mim::train::TrainResult r = mim::train::Train(*model->model, samples, config, dir);
    json losses = json::array();
    for (double v : r.epoch_loss) losses.push_back(v);
    json out = {{"schema", "mim.train/1"},
                {"steps", r.steps},
                {"samples", samples.size()},
                {"initial_loss", r.history.empty() ? json(nullptr) : json(r.history.front().loss)},
                {"final_loss", r.history.empty() ? json(nullptr) : json(r.history.back().loss)},
                {"epoch_loss", losses},
                {"config", config.ToJson()}};
    if (!dir.empty()) {
      out["checkpoint"] = (dir / "model").string();
      out["history"] = (dir / "history.csv").string();
    }
    Emit(result_json, out);
  });
}

mim_status mim_evaluate(mim_model* model, const mim_dataset* dataset, mim_split split,
                        mim_predictor predictor, const char* options_json,
                        const char* roc_csv_path, char** report_json) {
  return Guard([&] {
    NotNull(dataset, "dataset");
    const mim::metrics::EvaluateOptions options = EvalOptions(ParseObject(options_json, "eval options"));
    auto samples = LoadIds(*dataset, split);
    if (samples.empty()) mim::Fail(mim::Error::Code::kInvalidArgument, "split has no samples");
    mim::metrics::MetricsReport report =
        mim::train::Evaluate(Predict(model, predictor, samples), samples, options);
    if (roc_csv_path && *roc_csv_path) mim::metrics::WriteRocCsv(roc_csv_path, report.roc);
    Emit(report_json, report.ToJson());
  });
}

mim_status mim_predict_masks(mim_model* model, const mim_dataset* dataset, mim_split split,
                             double threshold, const char* out_dir, char** result_json) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(dataset, "dataset");
    NotNull(out_dir, "out_dir");
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
      mim::Fail(mim::Error::Code::kInvalidArgument, "threshold must lie in [0, 1]");
    }
    auto samples = LoadIds(*dataset, split);
    auto probs = mim::train::PredictModel(*model->model, samples);
    CreateDir(out_dir);
    json files = json::array();
    for (size_t i = 0; i < samples.size(); ++i) {
      mim::metrics::Mask m = mim::metrics::Binarize(probs[i], threshold);
      mim::data::GrayImage img{m.height, m.width, std::move(m.pixels)};
      for (uint8_t& p : img.pixels) p = p ? 255 : 0;
      const fs::path path = fs::path(out_dir) / (samples[i].id + ".pgm");
      mim::data::WritePgm(path, img);
      files.push_back(path.filename().string());
    }
    Emit(result_json, {{"schema", "mim.predict/1"},
                       {"threshold", threshold},
                       {"out", out_dir},
                       {"files", files}});
  });
}

mim_status mim_flops(mim_model* model, int64_t height, int64_t width, char** report_json) {
  return Guard([&] {
    NotNull(model, "model");
    if (height < 1 || width < 1) {
      mim::Fail(mim::Error::Code::kInvalidArgument, "height and width must be positive");
    }
    Emit(report_json, mim::complexity::CountFlops(*model->model, height, width).ToJson());
  });
}

mim_status mim_bench(mim_model* model, int64_t height, int64_t width, int64_t batch,
                     int64_t warmup, int64_t repeat, uint64_t seed, char** report_json) {
  return Guard([&] {
    NotNull(model, "model");
    if (height < 1 || width < 1 || batch < 1 || repeat < 1 || warmup < 0) {
      mim::Fail(mim::Error::Code::kInvalidArgument,
                "bench needs positive height, width, batch and repeat, and warmup >= 0");
    }
    mim::model::MimModel& m = *model->model;
    const int64_t channels = m.config().in_channels;
    mim::Rng rng(seed);
    std::vector<double> pixels(batch * channels * height * width);
    for (double& v : pixels) v = rng.Uniform();
    const mim::Tensor images = mim::Tensor::FromData({batch, channels, height, width}, pixels);

    const bool checks = mim::FiniteChecksEnabled();
    const bool was_training = m.training();
    mim::SetFiniteChecks(false);
    m.set_training(false);
    std::vector<double> per_image_ms;
    try {
      mim::NoGradGuard no_grad;
      for (int64_t i = 0; i < warmup + repeat; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        mim::Tensor out = m.Forward(images);
        const auto t1 = std::chrono::steady_clock::now();
        if (i >= warmup) {
          per_image_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                                 static_cast<double>(batch));
        }
      }
    } catch (...) {
      mim::SetFiniteChecks(checks);
      m.set_training(was_training);
      throw;
    }
    mim::SetFiniteChecks(checks);
    m.set_training(was_training);

    double mean = 0.0;
    for (double v : per_image_ms) mean += v;
    mean /= static_cast<double>(per_image_ms.size());
    double var = 0.0;
    for (double v : per_image_ms) var += (v - mean) * (v - mean);
    // Sample standard deviation; 0 for a single run.
    const double stddev =
        per_image_ms.size() > 1 ? std::sqrt(var / static_cast<double>(per_image_ms.size() - 1)) : 0.0;
    Emit(report_json, {{"schema", "mim.bench/1"},
                       {"height", height},
                       {"width", width},
                       {"batch", batch},
                       {"warmup", warmup},
                       {"repeat", repeat},
                       {"threads", mim::MaxThreads()},
                       {"mean_ms_per_image", mean},
                       {"stddev_ms_per_image", stddev},
                       {"min_ms_per_image", *std::min_element(per_image_ms.begin(), per_image_ms.end())},
                       {"max_ms_per_image", *std::max_element(per_image_ms.begin(), per_image_ms.end())}});
  });
}

}  // extern "C"
