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

#include "complexity/complexity.h"

#include "ssm/ssm.h"
#include "tensor/ops.h"
#include "tensor/random.h"

namespace mim::complexity {

namespace {

constexpr uint64_t kStateDim = 16;

nlohmann::json TallyJson(const FlopTally& t) {
  return {{"mac", t[static_cast<int>(FlopKind::kMac)]},
          {"scan_core", t[static_cast<int>(FlopKind::kScanCore)]},
          {"pointwise", t[static_cast<int>(FlopKind::kPointwise)]},
          {"elementwise", t[static_cast<int>(FlopKind::kElementwise)]},
          {"total", t[0] + t[1] + t[2] + t[3]}};
}

}  // namespace

uint64_t SsmFlops(uint64_t n, uint64_t d) {
  const uint64_t e = 2 * d;
  return 3 * n * e * kStateDim + n * e * kStateDim;
}

uint64_t MimBlockFlops(uint64_t n, uint64_t m, uint64_t c, uint64_t d) {
  return 128 * m * n * c + 128 * n * d + 3 * m * n * c * c + 3 * n * d * d;
}

uint64_t TransformerFlops(uint64_t n, uint64_t d) { return 2 * n * d * (6 * d + n); }

uint64_t MeasureS6Flops(int64_t n, int64_t d, uint64_t seed) {
  Require(n >= 1 && d >= 1, Error::Code::kInvalidArgument, "n and d must be positive");
  Rng rng(seed);
  const int64_t e = 2 * d;
  ssm::SsmParams params = ssm::InitSsmParams(e, static_cast<int64_t>(kStateDim), rng);
  std::vector<double> x(n * e);
  for (double& v : x) v = rng.Uniform(-1.0, 1.0);
  FlopCounter counter;
  {
    FlopCounterScope scope(&counter);
    NoGradGuard no_grad;
    ssm::S6Forward(Tensor::FromData({1, n, e}, std::move(x)), params);
  }
  return counter.Total(FlopKind::kScanCore);
}

std::vector<StageComplexity> AnalyticStages(const model::MimConfig& config, int64_t height,
                                            int64_t width) {
  std::vector<StageComplexity> out;
  const int64_t k = config.words_per_sentence_side;
  for (int s = 0; s < model::kNumStages; ++s) {
    StageComplexity st;
    st.stage = s + 1;
    st.n = config.SentenceSide(s, height) * config.SentenceSide(s, width);
    st.m = k * k;
    st.c = config.WordDim(s);
    st.d = config.SentenceDim(s);
    st.state_dim = config.state_dim;
    st.expand = 2 * st.d;
    st.blocks = config.blocks_per_stage[s];
    st.analytic_ssm = SsmFlops(st.n, st.d);
    st.analytic_mim_block =
        config.inner_enabled ? MimBlockFlops(st.n, st.m, st.c, st.d)
                             : SsmFlops(st.n, st.d) + 3 * static_cast<uint64_t>(st.n * st.d * st.d);
    st.analytic_transformer_block = TransformerFlops(st.n, st.d);
    out.push_back(st);
  }
  return out;
}

FlopsReport CountFlops(model::MimModel& model, int64_t height, int64_t width) {
  const model::MimConfig& config = model.config();
  FlopsReport report;
  report.height = height;
  report.width = width;
  report.stages = AnalyticStages(config, height, width);
  for (const StageComplexity& st : report.stages) {
    report.analytic_encoder_mim_blocks += st.blocks * st.analytic_mim_block;
  }
  FlopCounter counter;
  {
    FlopCounterScope scope(&counter);
    NoGradGuard no_grad;
    model.Forward(Tensor::Zeros({1, config.in_channels, height, width}));
  }
  report.measured_total = counter.Total();
  report.measured_encoder = counter.TotalUnder("encoder");
  for (int kind = 0; kind < kNumFlopKinds; ++kind) {
    report.measured_by_kind[kind] = counter.Total(static_cast<FlopKind>(kind));
  }
  report.breakdown = counter.by_scope();
  return report;
}

nlohmann::json FlopsReport::ToJson() const {
  nlohmann::json stage_list = nlohmann::json::array();
  for (const StageComplexity& st : stages) {
    stage_list.push_back({{"stage", st.stage},
                          {"n", st.n},
                          {"m", st.m},
                          {"c", st.c},
                          {"d", st.d},
                          {"N", st.state_dim},
                          {"E", st.expand},
                          {"blocks", st.blocks},
                          {"analytic_ssm", st.analytic_ssm},
                          {"analytic_mim_block", st.analytic_mim_block},
                          {"analytic_transformer_block", st.analytic_transformer_block}});
  }
  nlohmann::json scopes = nlohmann::json::object();
  for (const auto& [scope, tally] : breakdown) scopes[scope.empty() ? "(root)" : scope] = TallyJson(tally);
  nlohmann::json out = {
      {"schema", kFlopsSchema},
      {"convention",
       "flops = 2 x multiply-accumulates for conv/linear/matmul; scan core 4 per (step, "
       "channel, state); normalization and activation 5 per element; other arithmetic 1 per "
       "element"},
      {"height", height},
      {"width", width},
      {"stages", stage_list},
      {"analytic_encoder_mim_blocks", analytic_encoder_mim_blocks},
      {"measured_total", measured_total},
      {"measured_encoder", measured_encoder},
      {"measured_by_kind", TallyJson(measured_by_kind)},
      {"breakdown", scopes},
  };
  if (!stages.empty()) {
    const StageComplexity& s1 = stages.front();
    out["n"] = s1.n;
    out["m"] = s1.m;
    out["c"] = s1.c;
    out["d"] = s1.d;
    out["N"] = s1.state_dim;
    out["E"] = s1.expand;
    out["analytic_ssm"] = s1.analytic_ssm;
    out["analytic_mim_block"] = s1.analytic_mim_block;
    out["analytic_transformer_block"] = s1.analytic_transformer_block;
  }
  return out;
}

}  // namespace mim::complexity
