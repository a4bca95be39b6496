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

#include "model/mim_model.h"

#include <cmath>
#include <string>
#include <utility>

#include "tensor/flop_counter.h"
#include "tensor/ops.h"

namespace mim::model {

namespace {

constexpr double kBnMomentum = 0.1;
constexpr double kBnEps = 1e-5;

bool IsPowerOfTwo(int64_t v) { return v >= 1 && (v & (v - 1)) == 0; }

int Log2(int64_t v) {
  int n = 0;
  while ((int64_t{1} << n) < v) ++n;
  return n;
}

Tensor ToNhwc(const Tensor& x) { return Permute(x, {0, 2, 3, 1}); }
Tensor ToNchw(const Tensor& x) { return Permute(x, {0, 3, 1, 2}); }

Tensor ConvWeight(int64_t out, int64_t in, int64_t k, Rng& rng) {
  return ss2d::UniformParam({out, in, k, k}, 1.0 / std::sqrt(static_cast<double>(in * k * k)),
                            rng);
}

BatchNormParams InitBatchNorm(int64_t channels) {
  BatchNormParams p;
  p.gamma = Tensor::Full({channels}, 1.0, true);
  p.beta = Tensor::Zeros({channels}, true);
  p.running_mean = Tensor::Zeros({channels});
  p.running_var = Tensor::Full({channels}, 1.0);
  return p;
}

ConvBnParams InitConvBn(int64_t out, int64_t in, int64_t stride, Rng& rng) {
  ConvBnParams p;
  p.weight = ConvWeight(out, in, 3, rng);
  p.bn = InitBatchNorm(out);
  p.stride = stride;
  p.padding = 1;
  return p;
}

LayerNormParams InitLayerNorm(int64_t dim) {
  return {Tensor::Full({dim}, 1.0, true), Tensor::Zeros({dim}, true)};
}

void AppendNorm(const std::string& prefix, const LayerNormParams& p,
                std::vector<NamedTensor>& out) {
  out.emplace_back(prefix + ".weight", p.gamma);
  out.emplace_back(prefix + ".bias", p.beta);
}

void AppendBn(const std::string& prefix, const BatchNormParams& p,
              std::vector<NamedTensor>& params, std::vector<NamedTensor>* buffers) {
  params.emplace_back(prefix + ".weight", p.gamma);
  params.emplace_back(prefix + ".bias", p.beta);
  if (buffers) {
    buffers->emplace_back(prefix + ".running_mean", p.running_mean);
    buffers->emplace_back(prefix + ".running_var", p.running_var);
  }
}

void AppendConvBn(const std::string& prefix, const ConvBnParams& p,
                  std::vector<NamedTensor>& params, std::vector<NamedTensor>* buffers) {
  params.emplace_back(prefix + ".conv.weight", p.weight);
  AppendBn(prefix + ".bn", p.bn, params, buffers);
}

void AppendMambaLayer(const std::string& prefix, const MambaLayerParams& p,
                      std::vector<NamedTensor>& out) {
  AppendNorm(prefix + ".norm1", p.norm1, out);
  p.vss.AppendNamed(prefix + ".vss", out);
  AppendNorm(prefix + ".norm2", p.norm2, out);
  p.ffn.AppendNamed(prefix + ".ffn", out);
}

Tensor Bn(const Tensor& x, BatchNormParams& p, bool training) {
  return BatchNorm2d(x, p.gamma, p.beta, &p.running_mean, &p.running_var, training,
                     kBnMomentum, kBnEps);
}

std::string StageName(int stage) { return "stage" + std::to_string(stage + 1); }

}  // namespace

void MimConfig::Validate() const {
  auto check = [](bool ok, const std::string& message) {
    if (!ok) Fail(Error::Code::kConfig, message);
  };
  check(in_channels >= 1, "in_channels must be positive");
  check(word_dim >= 1 && sentence_dim >= 1, "word_dim and sentence_dim must be positive");
  check(state_dim >= 1, "state_dim must be positive");
  for (int64_t b : blocks_per_stage) check(b >= 0, "blocks_per_stage entries must be >= 0");
  check(IsPowerOfTwo(word_pixels), "word_pixels must be a power of two");
  check(IsPowerOfTwo(words_per_sentence_side),
        "words_per_sentence_side must be a power of two");
  check(word_pixels * words_per_sentence_side >= 2,
        "word_pixels * words_per_sentence_side must be at least 2");
  const int64_t multiple = InputMultiple();
  check(height >= multiple && width >= multiple && height % multiple == 0 &&
            width % multiple == 0,
        "height and width must be positive multiples of " + std::to_string(multiple));
}

int64_t MimConfig::InputMultiple() const {
  return word_pixels * words_per_sentence_side * (int64_t{1} << (kNumStages - 1));
}

int64_t MimConfig::WordSide(int stage, int64_t pixels) const {
  return pixels / (word_pixels << stage);
}

int64_t MimConfig::SentenceSide(int stage, int64_t pixels) const {
  return WordSide(stage, pixels) / words_per_sentence_side;
}

int64_t MimConfig::FeatureStride(int stage) const {
  return (word_pixels * words_per_sentence_side / 2) << stage;
}

nlohmann::json MimConfig::ToJson() const {
  return {
      {"height", height},
      {"width", width},
      {"in_channels", in_channels},
      {"word_dim", word_dim},
      {"sentence_dim", sentence_dim},
      {"blocks_per_stage", blocks_per_stage},
      {"word_pixels", word_pixels},
      {"words_per_sentence_side", words_per_sentence_side},
      {"state_dim", state_dim},
      {"sentence_init", sentence_init == SentenceInit::kStem ? "stem" : "zero"},
      {"inner_enabled", inner_enabled},
      {"outer_bypass", outer_bypass},
      {"shared_directions", shared_directions},
  };
}

MimConfig MimConfig::FromJson(const nlohmann::json& json, MimConfig base) {
  if (!json.is_object()) Fail(Error::Code::kConfig, "model config must be a JSON object");
  try {
    for (const auto& [key, value] : json.items()) {
      if (key == "height") {
        base.height = value.get<int64_t>();
      } else if (key == "width") {
        base.width = value.get<int64_t>();
      } else if (key == "in_channels") {
        base.in_channels = value.get<int64_t>();
      } else if (key == "word_dim") {
        base.word_dim = value.get<int64_t>();
      } else if (key == "sentence_dim") {
        base.sentence_dim = value.get<int64_t>();
      } else if (key == "blocks_per_stage") {
        base.blocks_per_stage = value.get<std::array<int64_t, kNumStages>>();
      } else if (key == "word_pixels") {
        base.word_pixels = value.get<int64_t>();
      } else if (key == "words_per_sentence_side") {
        base.words_per_sentence_side = value.get<int64_t>();
      } else if (key == "state_dim") {
        base.state_dim = value.get<int64_t>();
      } else if (key == "sentence_init") {
        const std::string mode = value.get<std::string>();
        if (mode == "stem") {
          base.sentence_init = SentenceInit::kStem;
        } else if (mode == "zero") {
          base.sentence_init = SentenceInit::kZero;
        } else {
          Fail(Error::Code::kConfig, "sentence_init must be \"stem\" or \"zero\"");
        }
      } else if (key == "inner_enabled") {
        base.inner_enabled = value.get<bool>();
      } else if (key == "outer_bypass") {
        base.outer_bypass = value.get<bool>();
      } else if (key == "shared_directions") {
        base.shared_directions = value.get<bool>();
      } else {
        Fail(Error::Code::kConfig, "unknown model config key: " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(Error::Code::kConfig, std::string("invalid model config: ") + e.what());
  }
  return base;
}

MimConfig MimConfig::FromJson(const nlohmann::json& json) {
  return FromJson(json, MimConfig{});
}

Tensor LayerNormLast(const Tensor& x, const LayerNormParams& p) {
  return LayerNorm(x, p.gamma, p.beta, ss2d::kLayerNormEps);
}

Tensor ConvBnGelu(const Tensor& x_nchw, ConvBnParams& p, bool training) {
  Tensor y = Conv2d(x_nchw, p.weight, {}, p.stride, p.padding);
  return Gelu(Bn(y, p.bn, training));
}

Tensor MambaLayer(const Tensor& x, const MambaLayerParams& p) {
  Tensor y;
  {
    FlopScope scope("vss");
    y = Add(x, ss2d::VssBlock(LayerNormLast(x, p.norm1), p.vss));
  }
  FlopScope scope("ffn");
  return Add(y, ss2d::ConvFfn(LayerNormLast(y, p.norm2), p.ffn));
}

Tensor GroupWords(const Tensor& words, int64_t k) {
  Require(words.rank() == 4, Error::Code::kShape, "word grid must be [B, H, W, c]");
  const int64_t b = words.dim(0), h = words.dim(1), w = words.dim(2), c = words.dim(3);
  if (h % k != 0 || w % k != 0) {
    Fail(Error::Code::kShape, "word grid " + ShapeToString(words.shape()) +
                                  " does not tile into " + std::to_string(k) + "x" +
                                  std::to_string(k) + " sentences");
  }
  Tensor t = Reshape(words, {b, h / k, k, w / k, k, c});
  t = Permute(t, {0, 1, 3, 2, 4, 5});
  return Reshape(t, {b * (h / k) * (w / k), k, k, c});
}

Tensor UngroupWords(const Tensor& grouped, int64_t batch, int64_t hs, int64_t ws) {
  Require(grouped.rank() == 4 && grouped.dim(1) == grouped.dim(2), Error::Code::kShape,
          "grouped words must be [n, k, k, c]");
  const int64_t k = grouped.dim(1), c = grouped.dim(3);
  Require(grouped.dim(0) == batch * hs * ws, Error::Code::kShape,
          "grouped word count does not match the sentence grid");
  Tensor t = Reshape(grouped, {batch, hs, ws, k, k, c});
  t = Permute(t, {0, 1, 3, 2, 4, 5});
  return Reshape(t, {batch, hs * k, ws * k, c});
}

Tensor InnerUpdate(const Tensor& grouped_words, const MambaLayerParams& p) {
  Require(grouped_words.rank() == 4, Error::Code::kShape,
          "inner update expects [n, k, k, c] word grids");
  if (grouped_words.dim(1) != grouped_words.dim(2)) {
    Fail(Error::Code::kShape, "words per sentence must form a square grid");
  }
  return MambaLayer(grouped_words, p);
}

Tensor InjectWords(const Tensor& sentences, const Tensor& grouped_words,
                   const Tensor& proj_w, const Tensor& proj_b) {
  const int64_t d = sentences.dim(-1);
  const int64_t n = sentences.numel() / d;
  Require(grouped_words.dim(0) == n, Error::Code::kShape,
          "one word group is needed per sentence");
  const int64_t flat = grouped_words.numel() / n;
  if (proj_w.rank() != 2 || proj_w.dim(0) != d || proj_w.dim(1) != flat) {
    Fail(Error::Code::kShape, "injection weight " + ShapeToString(proj_w.shape()) +
                                  " does not map " + std::to_string(flat) + " -> " +
                                  std::to_string(d));
  }
  Tensor vec = Reshape(grouped_words, {n, flat});
  Tensor injected = Reshape(Linear(vec, proj_w, proj_b), sentences.shape());
  return Add(sentences, injected);
}

Tensor OuterUpdate(const Tensor& sentences, const MambaLayerParams& p) {
  Require(sentences.rank() == 4, Error::Code::kShape,
          "outer update expects a sentence grid [B, H, W, d]");
  return MambaLayer(sentences, p);
}

StageState MimBlock(const StageState& state, const MimBlockParams& p,
                    const MimBlockOptions& options) {
  const int64_t k = options.words_per_sentence_side;
  const Tensor& s = state.sentences;
  Require(s.rank() == 4, Error::Code::kShape, "sentence grid must be [B, H, W, d]");
  Tensor grouped = GroupWords(state.words, k);
  StageState next;
  if (options.inner_enabled) {
    FlopScope scope("inner");
    grouped = InnerUpdate(grouped, p.inner);
    next.words = UngroupWords(grouped, s.dim(0), s.dim(1), s.dim(2));
  } else {
    next.words = state.words;
  }
  {
    FlopScope scope("inject");
    next.sentences = InjectWords(s, grouped, p.inject_w, p.inject_b);
  }
  if (options.outer_override) {
    next.sentences = options.outer_override(next.sentences);
  } else if (!options.outer_bypass) {
    FlopScope scope("outer");
    next.sentences = OuterUpdate(next.sentences, p.outer);
  }
  return next;
}

Tensor PatchMerge(const Tensor& grid, const PatchMergeParams& p) {
  Require(grid.rank() == 4, Error::Code::kShape, "patch merge expects [B, H, W, c]");
  const int64_t b = grid.dim(0), h = grid.dim(1), w = grid.dim(2), c = grid.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    Fail(Error::Code::kShape, "patch merge needs even extents, got " +
                                  ShapeToString(grid.shape()));
  }
  Tensor t = Reshape(grid, {b, h / 2, 2, w / 2, 2, c});
  // Neighbourhood order (0,0), (1,0), (0,1), (1,1) in (row, col).
  t = Permute(t, {0, 1, 3, 4, 2, 5});
  t = Reshape(t, {b, h / 2, w / 2, 4 * c});
  return Linear(LayerNormLast(t, p.norm), p.reduction);
}

Tensor Upsample(const Tensor& x_nchw, UpsampleParams& p, bool training) {
  Tensor y = TransposedConv2d(x_nchw, p.deconv_w, {}, 2);
  y = Gelu(Bn(y, p.bn1, training));
  return ConvBnGelu(y, p.conv, training);
}

Tensor PatchExpand(const Tensor& x_nchw, const PatchExpandParams& p) {
  Require(x_nchw.rank() == 4, Error::Code::kShape, "patch expand expects [B, c, H, W]");
  const int64_t b = x_nchw.dim(0), c = x_nchw.dim(1), h = x_nchw.dim(2), w = x_nchw.dim(3);
  Require(c % 2 == 0, Error::Code::kShape, "patch expand needs an even channel count");
  Tensor t = Linear(ToNhwc(x_nchw), p.expand);
  t = Reshape(t, {b, h, w, 2, 2, c / 2});
  t = Permute(t, {0, 1, 3, 2, 4, 5});
  t = Reshape(t, {b, 2 * h, 2 * w, c / 2});
  return ToNchw(LayerNormLast(t, p.norm));
}

MambaLayerParams InitMambaLayer(int64_t dim, int64_t state_dim, bool shared_directions,
                                Rng& rng) {
  MambaLayerParams p;
  p.norm1 = InitLayerNorm(dim);
  p.vss = ss2d::InitVssBlock(dim, state_dim, shared_directions, rng);
  p.norm2 = InitLayerNorm(dim);
  p.ffn = ss2d::InitConvFfn(dim, rng);
  return p;
}

MimModel::MimModel(const MimConfig& config, uint64_t seed) : config_(config) {
  config_.Validate();
  Rng rng(seed);
  const int64_t c0 = config_.word_dim, d0 = config_.sentence_dim;

  const int word_downs = Log2(config_.word_pixels);
  int64_t in = config_.in_channels;
  for (int i = 0; i < word_downs; ++i) {
    word_stem_.push_back(InitConvBn(c0, in, 2, rng));
    in = c0;
  }
  word_stem_.push_back(InitConvBn(c0, in, 1, rng));

  if (config_.sentence_init == SentenceInit::kStem) {
    const int sentence_downs = Log2(config_.words_per_sentence_side);
    in = c0;
    if (sentence_downs == 0) sentence_stem_.push_back(InitConvBn(d0, in, 1, rng));
    for (int i = 0; i < sentence_downs; ++i) {
      sentence_stem_.push_back(InitConvBn(d0, in, 2, rng));
      in = d0;
    }
  }

  const int64_t m = config_.WordsPerSentence();
  for (int s = 0; s < kNumStages; ++s) {
    const int64_t c = config_.WordDim(s), d = config_.SentenceDim(s);
    for (int64_t i = 0; i < config_.blocks_per_stage[s]; ++i) {
      MimBlockParams block;
      if (config_.inner_enabled) {
        block.inner = InitMambaLayer(c, config_.state_dim, config_.shared_directions, rng);
      }
      block.inject_w = ss2d::LinearWeight(d, m * c, rng);
      block.inject_b = ss2d::LinearBias(d, m * c, rng);
      if (!config_.outer_bypass) {
        block.outer = InitMambaLayer(d, config_.state_dim, config_.shared_directions, rng);
      }
      blocks_[s].push_back(std::move(block));
    }
    if (s + 1 < kNumStages) {
      word_merge_[s] = {InitLayerNorm(4 * c), ss2d::LinearWeight(2 * c, 4 * c, rng)};
      sentence_merge_[s] = {InitLayerNorm(4 * d), ss2d::LinearWeight(2 * d, 4 * d, rng)};
    }
    UpsampleParams& up = upsample_[s];
    up.deconv_w = ss2d::UniformParam({d, d, 2, 2}, 1.0 / std::sqrt(4.0 * d), rng);
    up.bn1 = InitBatchNorm(d);
    up.conv = InitConvBn(d, d, 1, rng);
  }

  for (int s = 0; s + 1 < kNumStages; ++s) {
    const int64_t c = config_.SentenceDim(s);  // channels after fusion
    DecoderStageParams& dec = decoder_[s];
    dec.expand.expand = ss2d::LinearWeight(4 * c, 2 * c, rng);
    dec.expand.norm = InitLayerNorm(c);
    dec.fuse_w = ConvWeight(c, 2 * c, 1, rng);
    dec.fuse_b = ss2d::LinearBias(c, 2 * c, rng);
    for (auto& block : dec.res) {
      for (auto& conv : block) conv = InitConvBn(c, c, 1, rng);
    }
  }
  head_w_ = ConvWeight(1, d0, 1, rng);
  head_b_ = Tensor::Zeros({1}, true);
}

MimBlockOptions MimModel::BlockOptions() const {
  MimBlockOptions options;
  options.words_per_sentence_side = config_.words_per_sentence_side;
  options.inner_enabled = config_.inner_enabled;
  options.outer_bypass = config_.outer_bypass;
  options.outer_override = outer_override_;
  return options;
}

StageState MimModel::Stem(const Tensor& images) {
  Require(images.rank() == 4, Error::Code::kShape, "images must be [B, C, H, W]");
  if (images.dim(1) != config_.in_channels) {
    Fail(Error::Code::kShape, "images have " + std::to_string(images.dim(1)) +
                                  " channels, model expects " +
                                  std::to_string(config_.in_channels));
  }
  const int64_t multiple = config_.InputMultiple();
  if (images.dim(2) % multiple != 0 || images.dim(3) % multiple != 0) {
    Fail(Error::Code::kShape, "input extents " + ShapeToString(images.shape()) +
                                  " are not divisible by " + std::to_string(multiple));
  }
  FlopScope scope("stem");
  Tensor x = images;
  for (ConvBnParams& conv : word_stem_) x = ConvBnGelu(x, conv, training_);
  StageState state;
  state.words = ToNhwc(x);
  if (config_.sentence_init == SentenceInit::kStem) {
    for (ConvBnParams& conv : sentence_stem_) x = ConvBnGelu(x, conv, training_);
    state.sentences = ToNhwc(x);
  } else {
    const int64_t k = config_.words_per_sentence_side;
    state.sentences = Tensor::Zeros({images.dim(0), state.words.dim(1) / k,
                                     state.words.dim(2) / k, config_.sentence_dim});
  }
  return state;
}

EncoderOutput MimModel::Encode(const Tensor& images) {
  FlopScope scope("encoder");
  EncoderOutput out;
  StageState state = Stem(images);
  const MimBlockOptions options = BlockOptions();
  for (int s = 0; s < kNumStages; ++s) {
    FlopScope stage_scope(StageName(s));
    for (const MimBlockParams& block : blocks_[s]) {
      state = MimBlock(state, block, options);
      ++out.blocks_run;
    }
    out.sentences[s] = ToNchw(state.sentences);
    if (s + 1 < kNumStages) {
      FlopScope merge_scope("merge");
      state.words = PatchMerge(state.words, word_merge_[s]);
      state.sentences = PatchMerge(state.sentences, sentence_merge_[s]);
    }
  }
  return out;
}

std::array<Tensor, kNumStages> MimModel::Adapt(const EncoderOutput& encoded) {
  FlopScope scope("adapter");
  std::array<Tensor, kNumStages> features;
  for (int s = 0; s < kNumStages; ++s) {
    features[s] = Upsample(encoded.sentences[s], upsample_[s], training_);
  }
  return features;
}

Tensor MimModel::Decode(const std::array<Tensor, kNumStages>& features) {
  FlopScope scope("decoder");
  Tensor x = features[kNumStages - 1];
  for (int s = kNumStages - 2; s >= 0; --s) {
    DecoderStageParams& dec = decoder_[s];
    x = PatchExpand(x, dec.expand);
    if (x.shape() != features[s].shape()) {
      Fail(Error::Code::kShape, "decoder stride mismatch: expanded " +
                                    ShapeToString(x.shape()) + " vs skip " +
                                    ShapeToString(features[s].shape()));
    }
    x = Conv2d(Concat({x, features[s]}, 1), dec.fuse_w, dec.fuse_b, 1, 0);
    for (auto& block : dec.res) {
      Tensor y = ConvBnGelu(x, block[0], training_);
      x = Add(x, ConvBnGelu(y, block[1], training_));
    }
  }
  return Conv2d(x, head_w_, head_b_, 1, 0);
}

Tensor MimModel::Forward(const Tensor& images) {
  EncoderOutput encoded = Encode(images);
  Tensor logits = Decode(Adapt(encoded));
  FlopScope scope("head");
  return BilinearInterpolate(logits, images.dim(2), images.dim(3));
}

std::vector<NamedTensor> MimModel::Parameters() const {
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> buffers;
  for (size_t i = 0; i < word_stem_.size(); ++i) {
    AppendConvBn("stem.words." + std::to_string(i), word_stem_[i], params, &buffers);
  }
  for (size_t i = 0; i < sentence_stem_.size(); ++i) {
    AppendConvBn("stem.sentences." + std::to_string(i), sentence_stem_[i], params, &buffers);
  }
  for (int s = 0; s < kNumStages; ++s) {
    const std::string stage = "stages." + std::to_string(s);
    for (size_t i = 0; i < blocks_[s].size(); ++i) {
      const MimBlockParams& block = blocks_[s][i];
      const std::string prefix = stage + ".blocks." + std::to_string(i);
      if (config_.inner_enabled) AppendMambaLayer(prefix + ".inner", block.inner, params);
      params.emplace_back(prefix + ".inject.weight", block.inject_w);
      params.emplace_back(prefix + ".inject.bias", block.inject_b);
      if (!config_.outer_bypass) AppendMambaLayer(prefix + ".outer", block.outer, params);
    }
    if (s + 1 < kNumStages) {
      AppendNorm(stage + ".word_merge.norm", word_merge_[s].norm, params);
      params.emplace_back(stage + ".word_merge.reduction.weight", word_merge_[s].reduction);
      AppendNorm(stage + ".sentence_merge.norm", sentence_merge_[s].norm, params);
      params.emplace_back(stage + ".sentence_merge.reduction.weight",
                          sentence_merge_[s].reduction);
    }
  }
  for (int s = 0; s < kNumStages; ++s) {
    const std::string prefix = "upsample." + std::to_string(s);
    params.emplace_back(prefix + ".deconv.weight", upsample_[s].deconv_w);
    AppendBn(prefix + ".bn", upsample_[s].bn1, params, &buffers);
    AppendConvBn(prefix + ".refine", upsample_[s].conv, params, &buffers);
  }
  for (int s = 0; s + 1 < kNumStages; ++s) {
    const std::string prefix = "decoder." + std::to_string(s);
    const DecoderStageParams& dec = decoder_[s];
    params.emplace_back(prefix + ".expand.weight", dec.expand.expand);
    AppendNorm(prefix + ".expand.norm", dec.expand.norm, params);
    params.emplace_back(prefix + ".fuse.weight", dec.fuse_w);
    params.emplace_back(prefix + ".fuse.bias", dec.fuse_b);
    for (size_t r = 0; r < dec.res.size(); ++r) {
      for (size_t j = 0; j < dec.res[r].size(); ++j) {
        AppendConvBn(prefix + ".res." + std::to_string(r) + "." + std::to_string(j),
                     dec.res[r][j], params, &buffers);
      }
    }
  }
  params.emplace_back("head.weight", head_w_);
  params.emplace_back("head.bias", head_b_);
  return params;
}

std::vector<NamedTensor> MimModel::Buffers() const {
  std::vector<NamedTensor> buffers;
  std::vector<NamedTensor> ignored;
  for (size_t i = 0; i < word_stem_.size(); ++i) {
    AppendConvBn("stem.words." + std::to_string(i), word_stem_[i], ignored, &buffers);
  }
  for (size_t i = 0; i < sentence_stem_.size(); ++i) {
    AppendConvBn("stem.sentences." + std::to_string(i), sentence_stem_[i], ignored, &buffers);
  }
  for (int s = 0; s < kNumStages; ++s) {
    const std::string prefix = "upsample." + std::to_string(s);
    AppendBn(prefix + ".bn", upsample_[s].bn1, ignored, &buffers);
    AppendConvBn(prefix + ".refine", upsample_[s].conv, ignored, &buffers);
  }
  for (int s = 0; s + 1 < kNumStages; ++s) {
    const std::string prefix = "decoder." + std::to_string(s);
    for (size_t r = 0; r < decoder_[s].res.size(); ++r) {
      for (size_t j = 0; j < decoder_[s].res[r].size(); ++j) {
        AppendConvBn(prefix + ".res." + std::to_string(r) + "." + std::to_string(j),
                     decoder_[s].res[r][j], ignored, &buffers);
      }
    }
  }
  return buffers;
}

int64_t MimModel::ParameterCount() const {
  int64_t total = 0;
  for (const auto& [name, t] : Parameters()) total += t.numel();
  return total;
}

Checkpoint MimModel::ToCheckpoint() const {
  Checkpoint ck;
  ck.tensors = Parameters();
  for (auto& entry : Buffers()) ck.tensors.push_back(std::move(entry));
  ck.metadata["config"] = config_.ToJson();
  ck.metadata["parameter_count"] = ParameterCount();
  return ck;
}

void MimModel::Restore(const Checkpoint& checkpoint) {
  if (checkpoint.metadata.contains("config")) {
    const MimConfig stored = MimConfig::FromJson(checkpoint.metadata["config"]);
    if (stored.ToJson() != config_.ToJson()) {
      Fail(Error::Code::kConfig, "checkpoint config " + stored.ToJson().dump() +
                                     " does not match model config " +
                                     config_.ToJson().dump());
    }
  }
  std::vector<NamedTensor> destinations = Parameters();
  for (auto& entry : Buffers()) destinations.push_back(std::move(entry));
  RestoreInto(checkpoint, destinations);
}

Tensor ExpandChannels(const Tensor& images, int64_t channels) {
  Require(images.rank() == 4 && images.dim(1) == 1, Error::Code::kShape,
          "expected single-channel images [B, 1, H, W]");
  if (channels == 1) return images;
  return Concat(std::vector<Tensor>(channels, images), 1);
}

}  // namespace mim::model
