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

#include "train/train.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "tensor/checkpoint.h"
#include "tensor/ops.h"
#include "tensor/random.h"

namespace mim::train {

namespace fs = std::filesystem;

namespace {

void CheckSampleSize(const model::MimModel& model, const data::Sample& s) {
  const model::MimConfig& c = model.config();
  if (s.image.height != c.height || s.image.width != c.width) {
    Fail(Error::Code::kShape, "sample " + s.id + " is " + std::to_string(s.image.height) + "x" +
                                  std::to_string(s.image.width) + " but the model expects " +
                                  std::to_string(c.height) + "x" + std::to_string(c.width));
  }
}

Tensor BatchImages(const std::vector<data::Sample>& samples, const std::vector<int64_t>& idx,
                   int64_t channels) {
  std::vector<const data::GrayImage*> images;
  for (int64_t i : idx) images.push_back(&samples[i].image);
  return data::ImagesToTensor(images, channels);
}

Tensor BatchMasks(const std::vector<data::Sample>& samples, const std::vector<int64_t>& idx) {
  std::vector<const metrics::Mask*> masks;
  for (int64_t i : idx) masks.push_back(&samples[i].mask);
  return data::MasksToTensor(masks);
}

std::string StepName(int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06lld", static_cast<long long>(step));
  return buf;
}

}  // namespace

Tensor DiceLoss(const Tensor& probs, const Tensor& gt, double eps) {
  Require(probs.shape() == gt.shape(), Error::Code::kShape,
          "dice loss needs probabilities and targets of one shape");
  Tensor inter = Sum(Mul(probs, gt));
  Tensor denom = AddScalar(Add(Sum(probs), Sum(gt)), eps);
  Tensor ratio = Div(AddScalar(Scale(inter, 2.0), eps), denom);
  return AddScalar(Neg(ratio), 1.0);
}

void TrainConfig::Validate() const {
  auto check = [](bool ok, const std::string& message) {
    if (!ok) Fail(Error::Code::kConfig, "train config: " + message);
  };
  check(lr > 0, "lr must be positive");
  check(weight_decay >= 0, "weight_decay must be non-negative");
  check(batch_size >= 1, "batch_size must be at least 1");
  check(epochs >= 0, "epochs must be non-negative");
  check(max_steps >= 0, "max_steps must be non-negative");
  check(dice_eps >= 0, "dice_eps must be non-negative");
  check(checkpoint_every >= 0, "checkpoint_every must be non-negative");
  check(adagrad_eps > 0, "adagrad_eps must be positive");
}

nlohmann::json TrainConfig::ToJson() const {
  return {{"lr", lr},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"max_steps", max_steps},
          {"seed", seed},
          {"dice_eps", dice_eps},
          {"checkpoint_every", checkpoint_every},
          {"adagrad_eps", adagrad_eps}};
}

TrainConfig TrainConfig::FromJson(const nlohmann::json& json, TrainConfig base) {
  if (!json.is_object()) Fail(Error::Code::kConfig, "train config must be a JSON object");
  try {
    for (const auto& [key, value] : json.items()) {
      if (key == "lr") base.lr = value.get<double>();
      else if (key == "weight_decay") base.weight_decay = value.get<double>();
      else if (key == "batch_size") base.batch_size = value.get<int64_t>();
      else if (key == "epochs") base.epochs = value.get<int64_t>();
      else if (key == "max_steps") base.max_steps = value.get<int64_t>();
      else if (key == "seed") base.seed = value.get<uint64_t>();
      else if (key == "dice_eps") base.dice_eps = value.get<double>();
      else if (key == "checkpoint_every") base.checkpoint_every = value.get<int64_t>();
      else if (key == "adagrad_eps") base.adagrad_eps = value.get<double>();
      else Fail(Error::Code::kConfig, "unknown train config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(Error::Code::kConfig, std::string("train config: ") + e.what());
  }
  base.Validate();
  return base;
}

AdaGrad::AdaGrad(std::vector<NamedTensor> params, double lr, double weight_decay, double eps)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay), eps_(eps) {
  for (auto& [name, t] : params_) {
    Require(t.is_leaf(), Error::Code::kInvalidArgument, "optimizer parameters must be leaves");
    t.set_requires_grad(true);
    acc_.emplace_back(t.numel(), 0.0);
  }
}

void AdaGrad::Step() {
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p].second;
    auto values = t.mutable_data();
    const bool has_grad = t.has_grad();
    std::span<const double> grad = t.grad();
    std::vector<double>& acc = acc_[p];
    for (size_t i = 0; i < values.size(); ++i) {
      const double g = (has_grad ? grad[i] : 0.0) + weight_decay_ * values[i];
      acc[i] += g * g;
      values[i] -= lr_ * g / (std::sqrt(acc[i]) + eps_);
    }
    t.zero_grad();
  }
  ++steps_;
}

void WriteHistoryCsv(const fs::path& path, const std::vector<HistoryEntry>& history) {
  std::ofstream out(path);
  if (!out) Fail(Error::Code::kIo, "cannot write " + path.string());
  out << "step,loss\n";
  char line[64];
  for (const HistoryEntry& h : history) {
    std::snprintf(line, sizeof(line), "%lld,%.17g\n", static_cast<long long>(h.step), h.loss);
    out << line;
  }
  if (!out) Fail(Error::Code::kIo, "failed writing " + path.string());
}

Checkpoint TrainingCheckpoint(const model::MimModel& model, const TrainConfig& config,
                              int64_t steps) {
  Checkpoint ckpt = model.ToCheckpoint();
  ckpt.metadata["train"] = config.ToJson();
  ckpt.metadata["steps"] = steps;
  return ckpt;
}

TrainResult Train(model::MimModel& model, const std::vector<data::Sample>& samples,
                  const TrainConfig& config, const fs::path& out_dir) {
  config.Validate();
  Require(!samples.empty(), Error::Code::kInvalidArgument, "training needs at least one sample");
  for (const data::Sample& s : samples) CheckSampleSize(model, s);
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) Fail(Error::Code::kIo, "cannot create " + out_dir.string());
  }

  AdaGrad optimizer(model.Parameters(), config.lr, config.weight_decay, config.adagrad_eps);
  model.set_training(true);
  const int64_t n = static_cast<int64_t>(samples.size());
  const int64_t channels = model.config().in_channels;
  TrainResult result;
  bool done = config.max_steps > 0 && result.steps >= config.max_steps;
  for (int64_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    std::vector<int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(MixSeed(config.seed, static_cast<uint64_t>(epoch)));
    rng.Shuffle(order);
    double epoch_sum = 0;
    int64_t epoch_batches = 0;
    for (int64_t start = 0; start < n && !done; start += config.batch_size) {
      std::vector<int64_t> idx(order.begin() + start,
                               order.begin() + std::min(n, start + config.batch_size));
      Tensor images = BatchImages(samples, idx, channels);
      Tensor masks = BatchMasks(samples, idx);
      Tensor loss;
      try {
        loss = DiceLoss(Sigmoid(model.Forward(images)), masks, config.dice_eps);
      } catch (const Error& e) {
        if (e.code() != Error::Code::kNumeric) throw;
        Fail(Error::Code::kNumeric, "training diverged at step " + std::to_string(result.steps) +
                                        " (epoch " + std::to_string(epoch) + "): " + e.what());
      }
      const double value = loss.item();
      if (!std::isfinite(value)) {
        Fail(Error::Code::kNumeric, "loss is not finite at step " + std::to_string(result.steps));
      }
      result.history.push_back({result.steps, value});
      epoch_sum += value;
      ++epoch_batches;
      Backward(loss);
      optimizer.Step();
      ++result.steps;
      if (!out_dir.empty() && config.checkpoint_every > 0 &&
          result.steps % config.checkpoint_every == 0) {
        SaveCheckpoint(out_dir / StepName(result.steps),
                       TrainingCheckpoint(model, config, result.steps));
      }
      done = config.max_steps > 0 && result.steps >= config.max_steps;
    }
    if (epoch_batches > 0) result.epoch_loss.push_back(epoch_sum / epoch_batches);
  }
  if (!out_dir.empty()) {
    WriteHistoryCsv(out_dir / "history.csv", result.history);
    SaveCheckpoint(out_dir / "model", TrainingCheckpoint(model, config, result.steps));
  }
  return result;
}

std::vector<metrics::ProbMap> PredictModel(model::MimModel& model,
                                           const std::vector<data::Sample>& samples,
                                           int64_t batch_size) {
  Require(batch_size >= 1, Error::Code::kInvalidArgument, "batch size must be at least 1");
  for (const data::Sample& s : samples) CheckSampleSize(model, s);
  const bool was_training = model.training();
  model.set_training(false);
  NoGradGuard no_grad;
  std::vector<metrics::ProbMap> out;
  const int64_t n = static_cast<int64_t>(samples.size());
  for (int64_t start = 0; start < n; start += batch_size) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
    Tensor probs = Sigmoid(model.Forward(BatchImages(samples, idx, model.config().in_channels)));
    const int64_t h = probs.dim(2), w = probs.dim(3);
    for (size_t b = 0; b < idx.size(); ++b) {
      auto first = probs.data().begin() + static_cast<int64_t>(b) * h * w;
      out.push_back({h, w, std::vector<double>(first, first + h * w)});
    }
  }
  model.set_training(was_training);
  return out;
}

std::vector<metrics::ProbMap> PredictGtEcho(const std::vector<data::Sample>& samples) {
  std::vector<metrics::ProbMap> out;
  for (const data::Sample& s : samples) {
    metrics::ProbMap p{s.mask.height, s.mask.width, {}};
    for (uint8_t v : s.mask.pixels) p.values.push_back(v ? 1.0 : 0.0);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<metrics::ProbMap> PredictZeros(const std::vector<data::Sample>& samples) {
  std::vector<metrics::ProbMap> out;
  for (const data::Sample& s : samples) {
    out.push_back({s.mask.height, s.mask.width,
                   std::vector<double>(s.mask.height * s.mask.width, 0.0)});
  }
  return out;
}

metrics::MetricsReport Evaluate(const std::vector<metrics::ProbMap>& probs,
                                const std::vector<data::Sample>& samples,
                                const metrics::EvaluateOptions& options) {
  std::vector<metrics::Mask> gts;
  for (const data::Sample& s : samples) gts.push_back(s.mask);
  return metrics::ComputeMetrics(probs, gts, options);
}

}  // namespace mim::train
