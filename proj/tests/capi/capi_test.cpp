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

#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mim/mim.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const char* kToyModel =
    R"({"word_dim": 2, "sentence_dim": 4, "state_dim": 4, "blocks_per_stage": [1, 1, 1, 1]})";

json Take(char* s) {
  REQUIRE(s != nullptr);
  json j = json::parse(s);
  mim_string_free(s);
  return j;
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mim_capi_test_" + name);
  fs::remove_all(dir);
  return dir;
}

struct Model {
  mim_model* p = nullptr;
  ~Model() { mim_model_destroy(p); }
};
struct Dataset {
  mim_dataset* p = nullptr;
  ~Dataset() { mim_dataset_destroy(p); }
};

TEST_CASE("capi: status names and version") {
  CHECK(std::string(mim_version()) == "0.1.0");
  CHECK(std::string(mim_status_name(MIM_OK)) == "ok");
  CHECK(std::string(mim_status_name(MIM_ERR_SHAPE)) == "shape");
  CHECK(std::string(mim_status_name(MIM_ERR_NOT_FOUND)) == "not_found");
  CHECK(mim_max_threads() >= 1);
  mim_model_destroy(nullptr);
  mim_dataset_destroy(nullptr);
  mim_string_free(nullptr);
}

TEST_CASE("capi: argument and config errors") {
  CHECK(mim_model_create(nullptr, 0, nullptr) == MIM_ERR_INVALID_ARGUMENT);
  CHECK(std::string(mim_last_error()).find("NULL") != std::string::npos);
  Model m;
  CHECK(mim_model_create("{not json", 0, &m.p) == MIM_ERR_CONFIG);
  CHECK(m.p == nullptr);
  CHECK(mim_model_create(R"({"word_dim": 0})", 0, &m.p) == MIM_ERR_CONFIG);
  CHECK(mim_model_create(R"({"unknown": 1})", 0, &m.p) == MIM_ERR_CONFIG);
  CHECK(mim_model_create("[1, 2]", 0, &m.p) == MIM_ERR_CONFIG);
  CHECK(mim_model_load("/nonexistent/model", &m.p) == MIM_ERR_NOT_FOUND);
  // A successful call clears the message.
  CHECK(mim_model_create(kToyModel, 0, &m.p) == MIM_OK);
  CHECK(std::string(mim_last_error()).empty());
}

TEST_CASE("capi: last error is per thread") {
  Model m;
  CHECK(mim_model_create("{bad", 0, &m.p) == MIM_ERR_CONFIG);
  std::string other;
  std::thread t([&] { other = mim_last_error(); });
  t.join();
  CHECK(other.empty());
  CHECK(!std::string(mim_last_error()).empty());
}

TEST_CASE("capi: model save, load and predict") {
  const fs::path dir = TempDir("model");
  fs::create_directories(dir);
  Model a;
  REQUIRE(mim_model_create(kToyModel, 3, &a.p) == MIM_OK);
  int64_t count = 0;
  REQUIRE(mim_model_parameter_count(a.p, &count) == MIM_OK);
  CHECK(count > 0);
  char* cfg = nullptr;
  REQUIRE(mim_model_config(a.p, &cfg) == MIM_OK);
  json config = Take(cfg);
  CHECK(config["word_dim"] == 2);

  std::vector<uint8_t> images(2 * 64 * 64);
  for (size_t i = 0; i < images.size(); ++i) images[i] = static_cast<uint8_t>((i * 37) % 251);
  std::vector<double> pa(images.size()), pb(images.size());
  REQUIRE(mim_model_predict(a.p, images.data(), 2, 64, 64, pa.data()) == MIM_OK);
  for (double v : pa) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  const std::string prefix = (dir / "m").string();
  REQUIRE(mim_model_save(a.p, prefix.c_str()) == MIM_OK);
  Model b;
  REQUIRE(mim_model_load(prefix.c_str(), &b.p) == MIM_OK);
  REQUIRE(mim_model_predict(b.p, images.data(), 2, 64, 64, pb.data()) == MIM_OK);
  CHECK(pa == pb);

  CHECK(mim_model_predict(a.p, images.data(), 1, 48, 48, pb.data()) == MIM_ERR_SHAPE);
  CHECK(mim_model_predict(a.p, images.data(), 0, 64, 64, pb.data()) == MIM_ERR_INVALID_ARGUMENT);
  fs::remove_all(dir);
}

TEST_CASE("capi: synthetic data, reference evaluation and shape mismatch") {
  const fs::path dir = TempDir("data");
  Dataset ds;
  REQUIRE(mim_synth_write(dir.c_str(), R"({"seed": 5})", 10, 0.8, &ds.p) == MIM_OK);
  int64_t n_train = 0, n_test = 0, n_all = 0;
  REQUIRE(mim_dataset_count(ds.p, MIM_SPLIT_TRAIN, &n_train) == MIM_OK);
  REQUIRE(mim_dataset_count(ds.p, MIM_SPLIT_TEST, &n_test) == MIM_OK);
  REQUIRE(mim_dataset_count(ds.p, MIM_SPLIT_ALL, &n_all) == MIM_OK);
  CHECK(n_train == 8);
  CHECK(n_test == 2);
  CHECK(n_all == 10);
  char* manifest = nullptr;
  REQUIRE(mim_dataset_manifest(ds.p, &manifest) == MIM_OK);
  CHECK(Take(manifest)["schema"] == "mim.manifest/1");

  char* report = nullptr;
  REQUIRE(mim_evaluate(nullptr, ds.p, MIM_SPLIT_ALL, MIM_PREDICTOR_GT_ECHO, nullptr, nullptr,
                       &report) == MIM_OK);
  json echo = Take(report);
  CHECK(echo["pd"] == 1.0);
  CHECK(echo["iou"] == 1.0);
  CHECK(echo["fa"] == 0.0);
  REQUIRE(mim_evaluate(nullptr, ds.p, MIM_SPLIT_TEST, MIM_PREDICTOR_ZEROS, R"({"threshold": 0.3})",
                       nullptr, &report) == MIM_OK);
  json zeros = Take(report);
  CHECK(zeros["pd"] == 0.0);
  CHECK(zeros["threshold"] == 0.3);
  CHECK(mim_evaluate(nullptr, ds.p, MIM_SPLIT_TEST, MIM_PREDICTOR_MODEL, nullptr, nullptr,
                     &report) == MIM_ERR_INVALID_ARGUMENT);
  CHECK(mim_evaluate(nullptr, ds.p, MIM_SPLIT_TEST, MIM_PREDICTOR_ZEROS, R"({"radius": -1})",
                     nullptr, &report) == MIM_ERR_CONFIG);

  // A 32x32 model cannot consume 64x64 samples.
  Model small;
  REQUIRE(mim_model_create(R"({"height": 32, "width": 32, "word_dim": 2, "sentence_dim": 4,
                               "state_dim": 4, "blocks_per_stage": [1, 1, 1, 1],
                               "words_per_sentence_side": 2})",
                           0, &small.p) == MIM_OK);
  CHECK(mim_train(small.p, ds.p, R"({"max_steps": 1})", nullptr, nullptr) == MIM_ERR_SHAPE);
  CHECK(mim_train(small.p, ds.p, R"({"lr": -1})", nullptr, nullptr) == MIM_ERR_CONFIG);

  // Resizing on open makes the same data usable.
  Dataset resized;
  REQUIRE(mim_dataset_open(dir.c_str(), 0, 0.8, 32, 1, &resized.p) == MIM_OK);
  char* result = nullptr;
  REQUIRE(mim_train(small.p, resized.p, R"({"max_steps": 1, "batch_size": 2})", nullptr, &result) ==
          MIM_OK);
  CHECK(Take(result)["steps"] == 1);
  fs::remove_all(dir);
  CHECK(mim_dataset_open(dir.c_str(), 0, 0.8, 0, 1, &resized.p) == MIM_ERR_NOT_FOUND);
}

TEST_CASE("capi: train, evaluate and predict masks") {
  const fs::path dir = TempDir("train");
  Dataset ds;
  REQUIRE(mim_synth_write((dir / "data").c_str(), nullptr, 6, 0.5, &ds.p) == MIM_OK);
  Model m;
  REQUIRE(mim_model_create(kToyModel, 1, &m.p) == MIM_OK);
  char* result = nullptr;
  REQUIRE(mim_train(m.p, ds.p, R"({"max_steps": 2, "batch_size": 3, "epochs": 5})", (dir / "run").c_str(),
                    &result) == MIM_OK);
  json r = Take(result);
  CHECK(r["schema"] == "mim.train/1");
  CHECK(r["steps"] == 2);
  CHECK(fs::exists(dir / "run" / "model.json"));
  CHECK(fs::exists(dir / "run" / "history.csv"));

  Model loaded;
  REQUIRE(mim_model_load((dir / "run" / "model").c_str(), &loaded.p) == MIM_OK);
  char* a = nullptr;
  char* b = nullptr;
  const std::string roc = (dir / "roc.csv").string();
  REQUIRE(mim_evaluate(m.p, ds.p, MIM_SPLIT_TEST, MIM_PREDICTOR_MODEL, nullptr, roc.c_str(), &a) ==
          MIM_OK);
  REQUIRE(mim_evaluate(loaded.p, ds.p, MIM_SPLIT_TEST, MIM_PREDICTOR_MODEL, nullptr, nullptr, &b) ==
          MIM_OK);
  CHECK(std::string(a) == std::string(b));
  mim_string_free(a);
  mim_string_free(b);
  CHECK(fs::exists(roc));

  REQUIRE(mim_predict_masks(loaded.p, ds.p, MIM_SPLIT_TEST, 0.5, (dir / "pred").c_str(), &result) ==
          MIM_OK);
  json p = Take(result);
  CHECK(p["files"].size() == 3);
  CHECK(mim_predict_masks(loaded.p, ds.p, MIM_SPLIT_TEST, 1.5, (dir / "pred").c_str(), nullptr) ==
        MIM_ERR_INVALID_ARGUMENT);
  fs::remove_all(dir);
}

TEST_CASE("capi: flops report against closed forms") {
  Model m;
  REQUIRE(mim_model_create(nullptr, 0, &m.p) == MIM_OK);
  char* report = nullptr;
  REQUIRE(mim_flops(m.p, 64, 64, &report) == MIM_OK);
  json j = Take(report);
  CHECK(j["schema"] == "mim.flops/1");
  for (const json& st : j["stages"]) {
    const uint64_t n = st["n"], mm = st["m"], c = st["c"], d = st["d"];
    CHECK(st["analytic_ssm"].get<uint64_t>() == 128 * n * d);
    CHECK(st["analytic_mim_block"].get<uint64_t>() ==
          128 * mm * n * c + 128 * n * d + 3 * mm * n * c * c + 3 * n * d * d);
    CHECK(st["analytic_transformer_block"].get<uint64_t>() == 2 * n * d * (6 * d + n));
  }
  CHECK(j["stages"][0]["n"] == 64);
  CHECK(mim_flops(m.p, 0, 64, &report) == MIM_ERR_INVALID_ARGUMENT);
}

TEST_CASE("capi: bench report") {
  Model m;
  REQUIRE(mim_model_create(kToyModel, 0, &m.p) == MIM_OK);
  char* report = nullptr;
  REQUIRE(mim_bench(m.p, 64, 64, 2, 0, 3, 1, &report) == MIM_OK);
  json j = Take(report);
  CHECK(j["schema"] == "mim.bench/1");
  CHECK(j["repeat"] == 3);
  CHECK(j["mean_ms_per_image"].get<double>() > 0.0);
  CHECK(j["stddev_ms_per_image"].get<double>() >= 0.0);
  CHECK(j["min_ms_per_image"].get<double>() <= j["mean_ms_per_image"].get<double>());
  CHECK(mim_bench(m.p, 64, 64, 1, 0, 0, 1, &report) == MIM_ERR_INVALID_ARGUMENT);
}

}  // namespace
