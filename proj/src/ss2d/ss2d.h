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

#ifndef MIM_SS2D_SS2D_H_
#define MIM_SS2D_SS2D_H_

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssm/ssm.h"
#include "tensor/random.h"
#include "tensor/tensor.h"

namespace mim::ss2d {

// The four scan orders. The reversed orders visit the grid exactly
// backwards relative to their forward counterparts.
enum class ScanDirection : int {
  kRowMajor = 0,
  kColMajor = 1,
  kRowMajorReversed = 2,
  kColMajorReversed = 3,
};

inline constexpr std::array<ScanDirection, 4> kScanDirections = {
    ScanDirection::kRowMajor, ScanDirection::kColMajor,
    ScanDirection::kRowMajorReversed, ScanDirection::kColMajorReversed};

// order[k] is the row-major grid position visited at sequence index k.
std::vector<int64_t> ScanOrder(int64_t height, int64_t width, ScanDirection dir);
std::vector<int64_t> InvertOrder(const std::vector<int64_t>& order);

// [..., H, W, E] -> [..., H*W, E] in the given direction.
Tensor ScanExpand(const Tensor& grid, ScanDirection dir);

// Inverse-permutes each sequence (indexed by direction) back to the grid
// and sums them in direction order. Sequences are [..., H*W, E].
Tensor ScanMerge(const std::array<Tensor, 4>& sequences, int64_t height,
                 int64_t width);

// Per-direction sequence operator; direction index is 0..3.
using SequenceOp = std::function<Tensor(const Tensor& sequence, int direction)>;

// Expands z ([..., H, W, E]) in four directions, applies op to each
// sequence, and merges.
Tensor Ss2dForwardWith(const Tensor& z, const SequenceOp& op);

// SS2D with one S6 parameter set per direction (entries may alias when
// parameters are shared).
Tensor Ss2dForward(const Tensor& z, const std::array<ssm::SsmParams, 4>& params);

// Visual state space block: d -> E = 2d main branch (linear, depthwise 3x3,
// SiLU, SS2D, layer norm) gated by SiLU(linear(x)), then linear E -> d.
struct VssBlockParams {
  Tensor in_proj_w, in_proj_b;    // [E, d], [E]
  Tensor gate_proj_w, gate_proj_b;  // [E, d], [E]
  Tensor dw_w, dw_b;              // [3, 3, E], [E]
  std::array<ssm::SsmParams, 4> ssm;
  bool shared_directions = false;
  Tensor norm_gamma, norm_beta;   // [E]
  Tensor out_proj_w, out_proj_b;  // [d, E], [d]

  int64_t dim() const { return out_proj_w.dim(0); }
  void AppendNamed(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

VssBlockParams InitVssBlock(int64_t dim, int64_t state_dim,
                            bool shared_directions, Rng& rng);

// x is channels-last [B, H, W, d].
Tensor VssBlock(const Tensor& x, const VssBlockParams& params);

// Pointwise d -> 4d, depthwise 3x3, GeLU, pointwise 4d -> d.
struct ConvFfnParams {
  Tensor fc1_w, fc1_b;  // [4d, d], [4d]
  Tensor dw_w, dw_b;    // [3, 3, 4d], [4d]
  Tensor fc2_w, fc2_b;  // [d, 4d], [d]

  void AppendNamed(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

inline constexpr int64_t kFfnExpansion = 4;

ConvFfnParams InitConvFfn(int64_t dim, Rng& rng);

Tensor ConvFfn(const Tensor& x, const ConvFfnParams& params);

// Parameter helpers shared with the model.
Tensor UniformParam(const Shape& shape, double bound, Rng& rng);
Tensor LinearWeight(int64_t out_dim, int64_t in_dim, Rng& rng);
Tensor LinearBias(int64_t out_dim, int64_t in_dim, Rng& rng);

inline constexpr double kLayerNormEps = 1e-5;

}  // namespace mim::ss2d

#endif  // MIM_SS2D_SS2D_H_
