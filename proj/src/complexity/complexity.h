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

#ifndef MIM_COMPLEXITY_COMPLEXITY_H_
#define MIM_COMPLEXITY_COMPLEXITY_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "model/mim_model.h"
#include "tensor/flop_counter.h"

namespace mim::complexity {

// Closed forms, in flops (2 per multiply-accumulate). State size N = 16 and
// expansion E = 2d are substituted.
//   ssm:         3nEN + nEN = 128nd
//   mim block:   128mnc + 128nd + 3mnc^2 + 3nd^2
//   transformer: 2nd(6d + n)
uint64_t SsmFlops(uint64_t n, uint64_t d);
uint64_t MimBlockFlops(uint64_t n, uint64_t m, uint64_t c, uint64_t d);
uint64_t TransformerFlops(uint64_t n, uint64_t d);

// Scan-core flops counted while running one S6 layer over a length-n
// sequence of E = 2d channels with N = 16 states.
uint64_t MeasureS6Flops(int64_t n, int64_t d, uint64_t seed = 0);

struct StageComplexity {
  int stage = 0;  // 1-based
  int64_t n = 0;  // sentences
  int64_t m = 0;  // words per sentence
  int64_t c = 0;  // word dim
  int64_t d = 0;  // sentence dim
  int64_t state_dim = 0;  // N
  int64_t expand = 0;     // E for the sentence scan
  int64_t blocks = 0;
  uint64_t analytic_ssm = 0;
  uint64_t analytic_mim_block = 0;
  uint64_t analytic_transformer_block = 0;
};

inline constexpr const char* kFlopsSchema = "mim.flops/1";

struct FlopsReport {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<StageComplexity> stages;
  uint64_t analytic_encoder_mim_blocks = 0;  // sum over executed blocks
  uint64_t measured_total = 0;
  uint64_t measured_encoder = 0;
  FlopTally measured_by_kind{};
  std::map<std::string, FlopTally> breakdown;  // per scope path

  nlohmann::json ToJson() const;
};

// Analytic entries for the configured geometry at height x width.
std::vector<StageComplexity> AnalyticStages(const model::MimConfig& config, int64_t height,
                                            int64_t width);

// Runs one forward pass on a single image without recording gradients and
// tallies every executed op.
FlopsReport CountFlops(model::MimModel& model, int64_t height, int64_t width);

}  // namespace mim::complexity

#endif  // MIM_COMPLEXITY_COMPLEXITY_H_
