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

#ifndef MIM_TRAIN_TRAIN_H_
#define MIM_TRAIN_TRAIN_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "data/dataset.h"
#include "json.hpp"
#include "metrics/metrics.h"
#include "model/mim_model.h"
#include "tensor/tensor.h"

namespace mim::train {

// 1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps), sums over the whole batch.
Tensor DiceLoss(const Tensor& probs, const Tensor& gt, double eps = 1.0);

// JSON keys are the field names.
struct TrainConfig {
  double lr = 0.06;
  double weight_decay = 0.0004;
  int64_t batch_size = 4;
  int64_t epochs = 1;
  // Stops after this many optimizer steps when positive.
  int64_t max_steps = 0;
  uint64_t seed = 0;
  double dice_eps = 1.0;
  // Writes step_<n> checkpoints every this many steps when positive.
  int64_t checkpoint_every = 0;
  double adagrad_eps = 1e-10;

  void Validate() const;
  nlohmann::json ToJson() const;
  static TrainConfig FromJson(const nlohmann::json& json, TrainConfig base);
};

// g = grad + wd * param; acc += g^2; param -= lr * g / (sqrt(acc) + eps).
// Weight decay is coupled into the gradient.
class AdaGrad {
 public:
  AdaGrad(std::vector<NamedTensor> params, double lr, double weight_decay, double eps = 1e-10);

  // Applies one update from the parameters' current gradients (missing
  // gradients count as zero) and clears them.
  void Step();
  int64_t steps() const { return steps_; }
  const std::vector<std::vector<double>>& accumulators() const { return acc_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> acc_;
  double lr_, weight_decay_, eps_;
  int64_t steps_ = 0;
};

struct HistoryEntry {
  int64_t step = 0;  // loss before update number `step` (0-based)
  double loss = 0.0;
};

struct TrainResult {
  std::vector<HistoryEntry> history;
  std::vector<double> epoch_loss;  // mean loss per epoch
  int64_t steps = 0;
};

// Seeded per-epoch shuffling; deterministic given config and data. With a
// non-empty out_dir, writes history.csv, the final checkpoint at
// out_dir/model and periodic step checkpoints. A non-finite loss aborts with
// a kNumeric error.
TrainResult Train(model::MimModel& model, const std::vector<data::Sample>& samples,
                  const TrainConfig& config, const std::filesystem::path& out_dir = {});

void WriteHistoryCsv(const std::filesystem::path& path, const std::vector<HistoryEntry>& history);

// Model checkpoint with the training config and step count in its metadata.
Checkpoint TrainingCheckpoint(const model::MimModel& model, const TrainConfig& config,
                              int64_t steps);

// Sigmoid probabilities in eval mode, batched, in sample order.
std::vector<metrics::ProbMap> PredictModel(model::MimModel& model,
                                           const std::vector<data::Sample>& samples,
                                           int64_t batch_size = 4);
// Reference predictors: the ground truth itself, and all zeros.
std::vector<metrics::ProbMap> PredictGtEcho(const std::vector<data::Sample>& samples);
std::vector<metrics::ProbMap> PredictZeros(const std::vector<data::Sample>& samples);

metrics::MetricsReport Evaluate(const std::vector<metrics::ProbMap>& probs,
                                const std::vector<data::Sample>& samples,
                                const metrics::EvaluateOptions& options = {});

}  // namespace mim::train

#endif  // MIM_TRAIN_TRAIN_H_
