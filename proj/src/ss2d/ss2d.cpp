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

#include "ss2d/ss2d.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tensor/ops.h"

namespace mim::ss2d {

std::vector<int64_t> ScanOrder(int64_t height, int64_t width, ScanDirection dir) {
  Require(height >= 1 && width >= 1, Error::Code::kShape,
          "scan grid must be non-empty");
  const int64_t n = height * width;
  std::vector<int64_t> order(n);
  const bool by_column =
      dir == ScanDirection::kColMajor || dir == ScanDirection::kColMajorReversed;
  for (int64_t k = 0; k < n; ++k) {
    order[k] = by_column ? (k % height) * width + k / height : k;
  }
  if (dir == ScanDirection::kRowMajorReversed ||
      dir == ScanDirection::kColMajorReversed) {
    std::reverse(order.begin(), order.end());
  }
  return order;
}

std::vector<int64_t> InvertOrder(const std::vector<int64_t>& order) {
  std::vector<int64_t> inverse(order.size());
  for (size_t k = 0; k < order.size(); ++k) inverse[order[k]] = static_cast<int64_t>(k);
  return inverse;
}

Tensor ScanExpand(const Tensor& grid, ScanDirection dir) {
  Require(grid.rank() >= 3, Error::Code::kShape, "scan input must be [..., H, W, E]");
  const int64_t h = grid.dim(-3);
  const int64_t w = grid.dim(-2);
  Shape flat(grid.shape().begin(), grid.shape().end() - 3);
  flat.push_back(h * w);
  flat.push_back(grid.dim(-1));
  return IndexSelect(Reshape(grid, flat), -2, ScanOrder(h, w, dir));
}

Tensor ScanMerge(const std::array<Tensor, 4>& sequences, int64_t height,
                 int64_t width) {
  Tensor total;
  for (int i = 0; i < 4; ++i) {
    const Tensor& seq = sequences[i];
    Require(seq.rank() >= 2, Error::Code::kShape, "sequence must be [..., L, E]");
    if (seq.dim(-2) != height * width) {
      Fail(Error::Code::kShape, "sequence length " + std::to_string(seq.dim(-2)) +
                                    " does not match grid " + std::to_string(height) +
                                    "x" + std::to_string(width));
    }
    Tensor back = IndexSelect(seq, -2, InvertOrder(ScanOrder(height, width, kScanDirections[i])));
    total = total.defined() ? Add(total, back) : back;
  }
  Shape shape(total.shape().begin(), total.shape().end() - 2);
  shape.push_back(height);
  shape.push_back(width);
  shape.push_back(total.dim(-1));
  return Reshape(total, shape);
}

Tensor Ss2dForwardWith(const Tensor& z, const SequenceOp& op) {
  Require(z.rank() >= 3, Error::Code::kShape, "SS2D input must be [..., H, W, E]");
  std::array<Tensor, 4> outputs;
  for (int i = 0; i < 4; ++i) outputs[i] = op(ScanExpand(z, kScanDirections[i]), i);
  return ScanMerge(outputs, z.dim(-3), z.dim(-2));
}

Tensor Ss2dForward(const Tensor& z, const std::array<ssm::SsmParams, 4>& params) {
  return Ss2dForwardWith(z, [&params](const Tensor& seq, int direction) {
    return ssm::S6Forward(seq, params[direction]);
  });
}

Tensor UniformParam(const Shape& shape, double bound, Rng& rng) {
  std::vector<double> values(NumElements(shape));
  for (double& v : values) v = rng.Uniform(-bound, bound);
  return Tensor::FromData(shape, std::move(values), true);
}

Tensor LinearWeight(int64_t out_dim, int64_t in_dim, Rng& rng) {
  return UniformParam({out_dim, in_dim}, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
}

Tensor LinearBias(int64_t out_dim, int64_t in_dim, Rng& rng) {
  return UniformParam({out_dim}, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
}

void VssBlockParams::AppendNamed(const std::string& prefix,
                                 std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + ".in_proj.weight", in_proj_w);
  out.emplace_back(prefix + ".in_proj.bias", in_proj_b);
  out.emplace_back(prefix + ".gate_proj.weight", gate_proj_w);
  out.emplace_back(prefix + ".gate_proj.bias", gate_proj_b);
  out.emplace_back(prefix + ".dwconv.weight", dw_w);
  out.emplace_back(prefix + ".dwconv.bias", dw_b);
  if (shared_directions) {
    ssm[0].AppendNamed(prefix + ".ssm", out);
  } else {
    for (int i = 0; i < 4; ++i) ssm[i].AppendNamed(prefix + ".ssm" + std::to_string(i), out);
  }
  out.emplace_back(prefix + ".norm.gamma", norm_gamma);
  out.emplace_back(prefix + ".norm.beta", norm_beta);
  out.emplace_back(prefix + ".out_proj.weight", out_proj_w);
  out.emplace_back(prefix + ".out_proj.bias", out_proj_b);
}

VssBlockParams InitVssBlock(int64_t dim, int64_t state_dim,
                            bool shared_directions, Rng& rng) {
  const int64_t inner = 2 * dim;
  VssBlockParams p;
  p.in_proj_w = LinearWeight(inner, dim, rng);
  p.in_proj_b = LinearBias(inner, dim, rng);
  p.gate_proj_w = LinearWeight(inner, dim, rng);
  p.gate_proj_b = LinearBias(inner, dim, rng);
  p.dw_w = UniformParam({3, 3, inner}, 1.0 / 3.0, rng);
  p.dw_b = UniformParam({inner}, 1.0 / 3.0, rng);
  p.shared_directions = shared_directions;
  if (shared_directions) {
    p.ssm[0] = ssm::InitSsmParams(inner, state_dim, rng);
    p.ssm[1] = p.ssm[2] = p.ssm[3] = p.ssm[0];
  } else {
    for (auto& s : p.ssm) s = ssm::InitSsmParams(inner, state_dim, rng);
  }
  p.norm_gamma = Tensor::Full({inner}, 1.0, true);
  p.norm_beta = Tensor::Zeros({inner}, true);
  p.out_proj_w = LinearWeight(dim, inner, rng);
  p.out_proj_b = LinearBias(dim, inner, rng);
  return p;
}

Tensor VssBlock(const Tensor& x, const VssBlockParams& params) {
  Require(x.rank() == 4, Error::Code::kShape, "VSS block input must be [B, H, W, d]");
  if (x.dim(-1) != params.dim()) {
    Fail(Error::Code::kShape, "VSS block input " + ShapeToString(x.shape()) +
                                  " does not match width " + std::to_string(params.dim()));
  }
  Tensor main = Linear(x, params.in_proj_w, params.in_proj_b);
  main = Silu(DepthwiseConv2dNhwc(main, params.dw_w, params.dw_b, 1));
  main = Ss2dForward(main, params.ssm);
  main = LayerNorm(main, params.norm_gamma, params.norm_beta, kLayerNormEps);
  Tensor gate = Silu(Linear(x, params.gate_proj_w, params.gate_proj_b));
  return Linear(Mul(main, gate), params.out_proj_w, params.out_proj_b);
}

void ConvFfnParams::AppendNamed(const std::string& prefix,
                                std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + ".fc1.weight", fc1_w);
  out.emplace_back(prefix + ".fc1.bias", fc1_b);
  out.emplace_back(prefix + ".dwconv.weight", dw_w);
  out.emplace_back(prefix + ".dwconv.bias", dw_b);
  out.emplace_back(prefix + ".fc2.weight", fc2_w);
  out.emplace_back(prefix + ".fc2.bias", fc2_b);
}

ConvFfnParams InitConvFfn(int64_t dim, Rng& rng) {
  const int64_t hidden = kFfnExpansion * dim;
  ConvFfnParams p;
  p.fc1_w = LinearWeight(hidden, dim, rng);
  p.fc1_b = LinearBias(hidden, dim, rng);
  p.dw_w = UniformParam({3, 3, hidden}, 1.0 / 3.0, rng);
  p.dw_b = UniformParam({hidden}, 1.0 / 3.0, rng);
  p.fc2_w = LinearWeight(dim, hidden, rng);
  p.fc2_b = LinearBias(dim, hidden, rng);
  return p;
}

Tensor ConvFfn(const Tensor& x, const ConvFfnParams& params) {
  Require(x.rank() == 4, Error::Code::kShape, "ConvFFN input must be [B, H, W, d]");
  Tensor h = Linear(x, params.fc1_w, params.fc1_b);
  h = Gelu(DepthwiseConv2dNhwc(h, params.dw_w, params.dw_b, 1));
  return Linear(h, params.fc2_w, params.fc2_b);
}

}  // namespace mim::ss2d
