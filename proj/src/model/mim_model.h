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

#ifndef MIM_MODEL_MIM_MODEL_H_
#define MIM_MODEL_MIM_MODEL_H_

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ss2d/ss2d.h"
#include "tensor/checkpoint.h"
#include "tensor/grad_check.h"
#include "tensor/random.h"
#include "tensor/tensor.h"

namespace mim::model {

inline constexpr int kNumStages = 4;

enum class SentenceInit { kStem, kZero };

// JSON keys are the field names.
struct MimConfig {
  int64_t height = 64;
  int64_t width = 64;
  int64_t in_channels = 3;
  int64_t word_dim = 8;       // C; stage s uses C * 2^s
  int64_t sentence_dim = 32;  // D; stage s uses D * 2^s
  std::array<int64_t, kNumStages> blocks_per_stage = {2, 2, 2, 2};
  int64_t word_pixels = 2;
  int64_t words_per_sentence_side = 4;
  int64_t state_dim = 16;
  SentenceInit sentence_init = SentenceInit::kStem;
  bool inner_enabled = true;
  bool outer_bypass = false;
  bool shared_directions = false;

  // Throws kConfig on inconsistent geometry.
  void Validate() const;
  int64_t InputMultiple() const;
  int64_t WordDim(int stage) const { return word_dim << stage; }
  int64_t SentenceDim(int stage) const { return sentence_dim << stage; }
  int64_t WordsPerSentence() const {
    return words_per_sentence_side * words_per_sentence_side;
  }
  // Grid sides at a stage for an input of the configured size.
  int64_t WordSide(int stage, int64_t pixels) const;
  int64_t SentenceSide(int stage, int64_t pixels) const;
  // Stride of the upsampled stage output relative to the input.
  int64_t FeatureStride(int stage) const;

  nlohmann::json ToJson() const;
  // Missing keys keep their current values; unknown keys are rejected.
  static MimConfig FromJson(const nlohmann::json& json, MimConfig base);
  static MimConfig FromJson(const nlohmann::json& json);
};

struct BatchNormParams {
  Tensor gamma, beta;
  Tensor running_mean, running_var;  // buffers
};

struct ConvBnParams {
  Tensor weight;  // [F, C, k, k]; no bias, the norm absorbs it
  BatchNormParams bn;
  int64_t stride = 1;
  int64_t padding = 1;
};

struct LayerNormParams {
  Tensor gamma, beta;
};

// One residual pair over a channels-last grid: x + vss(LN x), then
// x + ffn(LN x).
struct MambaLayerParams {
  LayerNormParams norm1;
  ss2d::VssBlockParams vss;
  LayerNormParams norm2;
  ss2d::ConvFfnParams ffn;
};

struct MimBlockParams {
  MambaLayerParams inner;   // shared across all sentences of the stage
  Tensor inject_w, inject_b;  // [d, m*c], [d]
  MambaLayerParams outer;
};

struct PatchMergeParams {
  LayerNormParams norm;  // over 4c
  Tensor reduction;      // [2c, 4c]
};

struct UpsampleParams {
  Tensor deconv_w;  // [d, d, 2, 2]
  BatchNormParams bn1;
  ConvBnParams conv;
};

struct PatchExpandParams {
  Tensor expand;  // [2c, c]
  LayerNormParams norm;  // over c/2
};

struct DecoderStageParams {
  PatchExpandParams expand;
  Tensor fuse_w, fuse_b;  // 1x1 conv [c/2, c, 1, 1]
  std::array<std::array<ConvBnParams, 2>, 2> res;
};

struct StageState {
  Tensor words;      // [B, Hw, Ww, c]
  Tensor sentences;  // [B, Hs, Ws, d]
};

struct EncoderOutput {
  std::array<Tensor, kNumStages> sentences;  // NCHW per stage
  int64_t blocks_run = 0;
};

using SentenceOp = std::function<Tensor(const Tensor& sentences)>;

// Building blocks. Tensors are channels-last unless noted.
Tensor LayerNormLast(const Tensor& x, const LayerNormParams& p);
Tensor ConvBnGelu(const Tensor& x_nchw, ConvBnParams& p, bool training);
Tensor MambaLayer(const Tensor& x, const MambaLayerParams& p);
// Regroups a word grid [B, Hw, Ww, c] into per-sentence word grids
// [B * n, k, k, c] (sentence-major) and back.
Tensor GroupWords(const Tensor& words, int64_t k);
Tensor UngroupWords(const Tensor& grouped, int64_t batch, int64_t hs,
                    int64_t ws);
Tensor InnerUpdate(const Tensor& grouped_words, const MambaLayerParams& p);
// sentences [..., d]; grouped_words [n_total, k, k, c] with matching count.
Tensor InjectWords(const Tensor& sentences, const Tensor& grouped_words,
                   const Tensor& proj_w, const Tensor& proj_b);
Tensor OuterUpdate(const Tensor& sentences, const MambaLayerParams& p);

struct MimBlockOptions {
  int64_t words_per_sentence_side = 4;
  bool inner_enabled = true;
  bool outer_bypass = false;
  // Replaces the outer update when set.
  SentenceOp outer_override;
};
StageState MimBlock(const StageState& state, const MimBlockParams& p,
                    const MimBlockOptions& options);

Tensor PatchMerge(const Tensor& grid, const PatchMergeParams& p);
Tensor Upsample(const Tensor& x_nchw, UpsampleParams& p, bool training);
Tensor PatchExpand(const Tensor& x_nchw, const PatchExpandParams& p);

MambaLayerParams InitMambaLayer(int64_t dim, int64_t state_dim,
                                bool shared_directions, Rng& rng);

class MimModel {
 public:
  MimModel(const MimConfig& config, uint64_t seed);

  const MimConfig& config() const { return config_; }

  // images [B, in_channels, H, W] -> logits [B, 1, H, W].
  Tensor Forward(const Tensor& images);
  StageState Stem(const Tensor& images);
  EncoderOutput Encode(const Tensor& images);
  // Stage outputs after the upsample adapters, NCHW.
  std::array<Tensor, kNumStages> Adapt(const EncoderOutput& encoded);
  Tensor Decode(const std::array<Tensor, kNumStages>& features);

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  std::vector<NamedTensor> Parameters() const;
  std::vector<NamedTensor> Buffers() const;
  int64_t ParameterCount() const;

  Checkpoint ToCheckpoint() const;
  // Validates the stored config against this model before copying values.
  void Restore(const Checkpoint& checkpoint);

  // Direct access for tests and ablations.
  std::vector<MimBlockParams>& blocks(int stage) { return blocks_[stage]; }
  MimBlockOptions BlockOptions() const;
  void set_outer_override(SentenceOp op) { outer_override_ = std::move(op); }

 private:
  MimConfig config_;
  bool training_ = true;
  std::vector<ConvBnParams> word_stem_;
  std::vector<ConvBnParams> sentence_stem_;
  std::array<std::vector<MimBlockParams>, kNumStages> blocks_;
  std::array<PatchMergeParams, kNumStages - 1> word_merge_;
  std::array<PatchMergeParams, kNumStages - 1> sentence_merge_;
  std::array<UpsampleParams, kNumStages> upsample_;
  std::array<DecoderStageParams, kNumStages - 1> decoder_;
  Tensor head_w_, head_b_;
  SentenceOp outer_override_;
};

// Replicates single-channel images [B, 1, H, W] to the configured channel
// count.
Tensor ExpandChannels(const Tensor& images, int64_t channels);

}  // namespace mim::model

#endif  // MIM_MODEL_MIM_MODEL_H_
