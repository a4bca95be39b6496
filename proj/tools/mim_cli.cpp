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

// mim: command-line front end over the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mim/mim.h"

namespace {

using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CliError {
  std::string code;
  std::string message;
  int exit_code = kExitRuntime;
};

void Check(mim_status status) {
  if (status != MIM_OK) throw CliError{mim_status_name(status), mim_last_error()};
}

[[noreturn]] void Usage(const std::string& message) { throw CliError{"usage", message, kExitUsage}; }

json TakeString(char* s) {
  json j = json::parse(s);
  mim_string_free(s);
  return j;
}

struct ModelHandle {
  mim_model* p = nullptr;
  ~ModelHandle() { mim_model_destroy(p); }
};

struct DatasetHandle {
  mim_dataset* p = nullptr;
  ~DatasetHandle() { mim_dataset_destroy(p); }
};

// Config file sections and the keys the CLI itself interprets. Library
// sections (model, synth, train, eval) are validated by the library.
const std::map<std::string, std::set<std::string>> kCliSections = {
    {"data", {"seed", "train_fraction", "size", "resize"}},
    {"flops", {"height", "width"}},
    {"bench", {"height", "width", "batch", "warmup", "repeat", "seed"}},
};
const std::set<std::string> kLibrarySections = {"model", "synth", "train", "eval"};

class Config {
 public:
  void Load(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw CliError{"not_found", "cannot read config file " + path};
    try {
      root_ = json::parse(in);
    } catch (const json::parse_error& e) {
      throw CliError{"config", "config file " + path + " is not valid JSON: " + e.what()};
    }
    if (!root_.is_object()) throw CliError{"config", "config file must hold a JSON object"};
    for (const auto& [section, body] : root_.items()) {
      const bool cli = kCliSections.count(section) > 0;
      if (!cli && !kLibrarySections.count(section)) {
        throw CliError{"config", "unknown config section '" + section + "'"};
      }
      if (!body.is_object()) throw CliError{"config", "config section '" + section + "' must be an object"};
      if (cli) {
        for (const auto& [key, value] : body.items()) {
          if (!kCliSections.at(section).count(key)) {
            throw CliError{"config", "unknown key '" + key + "' in config section '" + section + "'"};
          }
        }
      }
    }
  }

  json& Section(const std::string& name) {
    if (!root_.contains(name)) root_[name] = json::object();
    return root_[name];
  }

  template <typename T>
  T Get(const std::string& section, const std::string& key, T fallback) {
    json& s = Section(section);
    if (!s.contains(key)) return fallback;
    try {
      return s[key].get<T>();
    } catch (const json::exception&) {
      throw CliError{"config", "config key " + section + "." + key + " has the wrong type"};
    }
  }

 private:
  json root_ = json::object();
};

// Flag > config file > built-in default.
template <typename T>
void Override(json& section, const std::string& key, const std::optional<T>& flag) {
  if (flag) section[key] = *flag;
}

void WriteJson(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump() << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw CliError{"io", "cannot write " + path};
  out << j.dump(2) << '\n';
  if (!out) throw CliError{"io", "failed writing " + path};
}

mim_split ParseSplit(const std::string& s) {
  if (s == "train") return MIM_SPLIT_TRAIN;
  if (s == "test") return MIM_SPLIT_TEST;
  return MIM_SPLIT_ALL;
}

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
};

void AddCommon(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config, "JSON config file (sections: model, synth, train, eval, data, flops, bench)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--out", c.out, out_help);
}

struct ModelFlags {
  std::optional<int64_t> word_dim, sentence_dim, blocks, state_dim, size;
  bool no_inner = false;
};

void AddModelFlags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--word-dim", f.word_dim, "Word (inner) channel width at stage 1");
  cmd->add_option("--sentence-dim", f.sentence_dim, "Sentence (outer) channel width at stage 1");
  cmd->add_option("--blocks", f.blocks, "MiM blocks in every stage");
  cmd->add_option("--state-dim", f.state_dim, "SSM state size");
  cmd->add_flag("--no-inner", f.no_inner, "Disable the inner (word) Mamba");
}

void ApplyModelFlags(Config& cfg, const ModelFlags& f) {
  json& m = cfg.Section("model");
  Override(m, "word_dim", f.word_dim);
  Override(m, "sentence_dim", f.sentence_dim);
  Override(m, "state_dim", f.state_dim);
  if (f.blocks) m["blocks_per_stage"] = {*f.blocks, *f.blocks, *f.blocks, *f.blocks};
  if (f.no_inner) m["inner_enabled"] = false;
}

struct DataFlags {
  std::string path;
  std::optional<int64_t> size;
  std::optional<double> train_fraction;
};

void AddDataFlags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--data", d.path, "Dataset root (images/, masks/, optional manifest.json)")->required();
  cmd->add_option("--size", d.size, "Resize samples to size x size on load (0 keeps them)");
  cmd->add_option("--train-fraction", d.train_fraction, "Train share when no manifest is present");
}

void OpenData(Config& cfg, const DataFlags& d, const Common& c, DatasetHandle& out) {
  json& s = cfg.Section("data");
  Override(s, "size", d.size);
  Override(s, "train_fraction", d.train_fraction);
  Override(s, "seed", c.seed);
  const std::string resize = cfg.Get<std::string>("data", "resize", "bilinear");
  if (resize != "bilinear" && resize != "nearest") {
    throw CliError{"config", "data.resize must be 'bilinear' or 'nearest'"};
  }
  Check(mim_dataset_open(d.path.c_str(), cfg.Get<uint64_t>("data", "seed", 0),
                         cfg.Get<double>("data", "train_fraction", 0.8),
                         cfg.Get<int64_t>("data", "size", 0), resize == "bilinear", &out.p));
}

void MakeModel(Config& cfg, const std::string& checkpoint, uint64_t seed, ModelHandle& out) {
  if (!checkpoint.empty()) {
    Check(mim_model_load(checkpoint.c_str(), &out.p));
  } else {
    Check(mim_model_create(cfg.Section("model").dump().c_str(), seed, &out.p));
  }
}

json ModelConfig(const ModelHandle& m) {
  char* s = nullptr;
  Check(mim_model_config(m.p, &s));
  return TakeString(s);
}

int Run(int argc, char** argv) {
  CLI::App app{"Mamba-in-Mamba infrared small target detection", "mim"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mim_version()));
  std::string command;

  // synth
  Common synth_c;
  std::optional<int64_t> synth_count, synth_height, synth_width;
  std::optional<double> synth_fraction;
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  AddCommon(synth, synth_c, "Dataset directory to create");
  synth->add_option("--count", synth_count, "Number of samples (default 16)");
  synth->add_option("--height", synth_height, "Image height (default 64)");
  synth->add_option("--width", synth_width, "Image width (default 64)");
  synth->add_option("--train-fraction", synth_fraction, "Train share of the split (default 0.8)");

  // train
  Common train_c;
  DataFlags train_d;
  ModelFlags train_m;
  std::optional<int64_t> epochs, max_steps, batch_size, checkpoint_every;
  std::optional<double> lr, weight_decay;
  CLI::App* train = app.add_subcommand("train", "Train a model on the train split");
  AddCommon(train, train_c, "Run directory for checkpoints and history");
  AddDataFlags(train, train_d);
  AddModelFlags(train, train_m);
  train->add_option("--epochs", epochs, "Passes over the train split");
  train->add_option("--max-steps", max_steps, "Stop after this many optimizer steps (0: no cap)");
  train->add_option("--batch-size", batch_size, "Samples per step");
  train->add_option("--lr", lr, "AdaGrad learning rate");
  train->add_option("--weight-decay", weight_decay, "L2 weight decay coupled into the gradient");
  train->add_option("--checkpoint-every", checkpoint_every, "Write step checkpoints every N steps");

  // eval
  Common eval_c;
  DataFlags eval_d;
  std::string eval_ckpt, eval_split = "test", predictor = "model", roc_csv;
  std::optional<double> eval_threshold;
  CLI::App* eval = app.add_subcommand("eval", "Write a metrics report for a split");
  AddCommon(eval, eval_c, "Report path (default: stdout)");
  AddDataFlags(eval, eval_d);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint prefix, e.g. run/model");
  eval->add_option("--split", eval_split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  eval->add_option("--predictor", predictor, "model, gt-echo or zeros")
      ->check(CLI::IsMember({"model", "gt-echo", "zeros"}))
      ->capture_default_str();
  eval->add_option("--threshold", eval_threshold, "Binarization threshold (default 0.5)");
  eval->add_option("--roc-csv", roc_csv, "Also write the ROC curve as CSV");

  // predict
  Common pred_c;
  DataFlags pred_d;
  std::string pred_ckpt, pred_split = "test";
  std::optional<double> pred_threshold;
  CLI::App* predict = app.add_subcommand("predict", "Write predicted PGM masks for a split");
  AddCommon(predict, pred_c, "Directory for <id>.pgm masks");
  AddDataFlags(predict, pred_d);
  predict->add_option("--checkpoint", pred_ckpt, "Checkpoint prefix, e.g. run/model")->required();
  predict->add_option("--split", pred_split, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  predict->add_option("--threshold", pred_threshold, "Binarization threshold (default 0.5)");

  // flops
  Common flops_c;
  ModelFlags flops_m;
  std::string flops_ckpt;
  std::optional<int64_t> flops_h, flops_w;
  CLI::App* flops = app.add_subcommand("flops", "Write analytic and measured FLOPs");
  AddCommon(flops, flops_c, "Report path (default: stdout)");
  AddModelFlags(flops, flops_m);
  flops->add_option("--checkpoint", flops_ckpt, "Checkpoint prefix (default: config model)");
  flops->add_option("--height", flops_h, "Input height (default: model config)");
  flops->add_option("--width", flops_w, "Input width (default: model config)");

  // bench
  Common bench_c;
  ModelFlags bench_m;
  std::string bench_ckpt;
  std::optional<int64_t> bench_h, bench_w, bench_batch, bench_warmup, bench_repeat;
  CLI::App* bench = app.add_subcommand("bench", "Time forward passes");
  AddCommon(bench, bench_c, "Report path (default: stdout)");
  AddModelFlags(bench, bench_m);
  bench->add_option("--checkpoint", bench_ckpt, "Checkpoint prefix (default: config model)");
  bench->add_option("--height", bench_h, "Input height (default: model config)");
  bench->add_option("--width", bench_w, "Input width (default: model config)");
  bench->add_option("--batch", bench_batch, "Images per forward pass (default 1)");
  bench->add_option("--warmup", bench_warmup, "Untimed passes (default 1)");
  bench->add_option("--repeat", bench_repeat, "Timed passes (default 5)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    Usage(e.what());
  }

  Config cfg;
  if (synth->parsed()) {
    cfg.Load(synth_c.config);
    if (synth_c.out.empty()) Usage("synth needs --out");
    json& s = cfg.Section("synth");
    Override(s, "seed", synth_c.seed);
    Override(s, "height", synth_height);
    Override(s, "width", synth_width);
    json& d = cfg.Section("data");
    Override(d, "train_fraction", synth_fraction);
    const int64_t count = synth_count.value_or(16);
    DatasetHandle ds;
    Check(mim_synth_write(synth_c.out.c_str(), s.dump().c_str(), count,
                          cfg.Get<double>("data", "train_fraction", 0.8), &ds.p));
    int64_t n_train = 0, n_test = 0;
    Check(mim_dataset_count(ds.p, MIM_SPLIT_TRAIN, &n_train));
    Check(mim_dataset_count(ds.p, MIM_SPLIT_TEST, &n_test));
    WriteJson("", {{"schema", "mim.synth/1"}, {"out", synth_c.out}, {"count", count},
                   {"train", n_train}, {"test", n_test}});
    return 0;
  }

  if (train->parsed()) {
    cfg.Load(train_c.config);
    if (train_c.out.empty()) Usage("train needs --out");
    ApplyModelFlags(cfg, train_m);
    json& t = cfg.Section("train");
    Override(t, "seed", train_c.seed);
    Override(t, "epochs", epochs);
    Override(t, "max_steps", max_steps);
    Override(t, "batch_size", batch_size);
    Override(t, "lr", lr);
    Override(t, "weight_decay", weight_decay);
    Override(t, "checkpoint_every", checkpoint_every);
    DatasetHandle ds;
    OpenData(cfg, train_d, train_c, ds);
    ModelHandle model;
    MakeModel(cfg, "", cfg.Get<uint64_t>("train", "seed", 0), model);
    char* result = nullptr;
    Check(mim_train(model.p, ds.p, t.dump().c_str(), train_c.out.c_str(), &result));
    WriteJson("", TakeString(result));
    return 0;
  }

  if (eval->parsed()) {
    cfg.Load(eval_c.config);
    json& e = cfg.Section("eval");
    Override(e, "threshold", eval_threshold);
    DatasetHandle ds;
    OpenData(cfg, eval_d, eval_c, ds);
    ModelHandle model;
    mim_predictor kind = MIM_PREDICTOR_MODEL;
    if (predictor == "gt-echo") kind = MIM_PREDICTOR_GT_ECHO;
    if (predictor == "zeros") kind = MIM_PREDICTOR_ZEROS;
    if (kind == MIM_PREDICTOR_MODEL) {
      if (eval_ckpt.empty()) Usage("eval with --predictor model needs --checkpoint");
      MakeModel(cfg, eval_ckpt, 0, model);
    }
    char* report = nullptr;
    Check(mim_evaluate(model.p, ds.p, ParseSplit(eval_split), kind, e.dump().c_str(),
                       roc_csv.empty() ? nullptr : roc_csv.c_str(), &report));
    WriteJson(eval_c.out, TakeString(report));
    return 0;
  }

  if (predict->parsed()) {
    cfg.Load(pred_c.config);
    if (pred_c.out.empty()) Usage("predict needs --out");
    json& e = cfg.Section("eval");
    Override(e, "threshold", pred_threshold);
    DatasetHandle ds;
    OpenData(cfg, pred_d, pred_c, ds);
    ModelHandle model;
    MakeModel(cfg, pred_ckpt, 0, model);
    char* result = nullptr;
    Check(mim_predict_masks(model.p, ds.p, ParseSplit(pred_split),
                            cfg.Get<double>("eval", "threshold", 0.5), pred_c.out.c_str(), &result));
    WriteJson("", TakeString(result));
    return 0;
  }

  if (flops->parsed()) {
    cfg.Load(flops_c.config);
    ApplyModelFlags(cfg, flops_m);
    json& f = cfg.Section("flops");
    Override(f, "height", flops_h);
    Override(f, "width", flops_w);
    ModelHandle model;
    MakeModel(cfg, flops_ckpt, flops_c.seed.value_or(0), model);
    const json mc = ModelConfig(model);
    char* report = nullptr;
    Check(mim_flops(model.p, cfg.Get<int64_t>("flops", "height", mc["height"].get<int64_t>()),
                    cfg.Get<int64_t>("flops", "width", mc["width"].get<int64_t>()), &report));
    WriteJson(flops_c.out, TakeString(report));
    return 0;
  }

  if (bench->parsed()) {
    cfg.Load(bench_c.config);
    ApplyModelFlags(cfg, bench_m);
    json& b = cfg.Section("bench");
    Override(b, "height", bench_h);
    Override(b, "width", bench_w);
    Override(b, "batch", bench_batch);
    Override(b, "warmup", bench_warmup);
    Override(b, "repeat", bench_repeat);
    Override(b, "seed", bench_c.seed);
    const uint64_t seed = cfg.Get<uint64_t>("bench", "seed", 0);
    ModelHandle model;
    MakeModel(cfg, bench_ckpt, seed, model);
    const json mc = ModelConfig(model);
    char* report = nullptr;
    Check(mim_bench(model.p, cfg.Get<int64_t>("bench", "height", mc["height"].get<int64_t>()),
                    cfg.Get<int64_t>("bench", "width", mc["width"].get<int64_t>()),
                    cfg.Get<int64_t>("bench", "batch", 1), cfg.Get<int64_t>("bench", "warmup", 1),
                    cfg.Get<int64_t>("bench", "repeat", 5), seed, &report));
    WriteJson(bench_c.out, TakeString(report));
    return 0;
  }
  Usage("no command given");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const CliError& e) {
    std::cerr << json{{"error", {{"code", e.code}, {"message", e.message}}}}.dump() << std::endl;
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << std::endl;
    return kExitRuntime;
  }
}
