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

#ifndef MIM_TENSOR_OPS_H_
#define MIM_TENSOR_OPS_H_

#include <cstdint>
#include <vector>

#include "tensor/tensor.h"

namespace mim {

// Arithmetic. Binary ops broadcast numpy-style.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);
Tensor Neg(const Tensor& x);
Tensor Scale(const Tensor& x, double factor);
Tensor AddScalar(const Tensor& x, double offset);
Tensor Exp(const Tensor& x);
Tensor Log(const Tensor& x);
Tensor Sqrt(const Tensor& x);
Tensor Square(const Tensor& x);

// Reductions run in index order.
Tensor Sum(const Tensor& x);
Tensor Sum(const Tensor& x, int64_t axis, bool keepdim = false);
Tensor Mean(const Tensor& x);
Tensor Mean(const Tensor& x, int64_t axis, bool keepdim = false);

// x[..., K] times w[K, N].
Tensor MatMul(const Tensor& x, const Tensor& w);
// y = x * weight^T + bias along the last axis; weight is [out, in].
Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// Layout.
Tensor Reshape(const Tensor& x, Shape shape);  // one extent may be -1
Tensor Permute(const Tensor& x, const std::vector<int64_t>& axes);
Tensor Concat(const std::vector<Tensor>& parts, int64_t axis);
Tensor Slice(const Tensor& x, int64_t axis, int64_t start, int64_t length);
std::vector<Tensor> Split(const Tensor& x, int64_t axis,
                          const std::vector<int64_t>& sizes);
Tensor IndexSelect(const Tensor& x, int64_t axis,
                   const std::vector<int64_t>& indices);

// Convolutions, NCHW. Output extent is floor((H + 2p - k) / stride) + 1.
Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int64_t stride, int64_t padding, int64_t groups = 1);
// weight is [C_in, C_out, kh, kw]; output extent is stride * (H - 1) + k.
Tensor TransposedConv2d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, int64_t stride);
// Channels-last depthwise conv, stride 1. x is [B, H, W, C], weight is
// [kh, kw, C].
Tensor DepthwiseConv2dNhwc(const Tensor& x, const Tensor& weight,
                           const Tensor& bias, int64_t padding);

// Normalization over the last axis.
Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps);
// Per-channel normalization of NCHW input over batch and space. In training
// mode batch statistics are used and the running buffers (when given) move
// by momentum; otherwise the running buffers are used.
Tensor BatchNorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor* running_mean, Tensor* running_var, bool training,
                   double momentum, double eps);

enum class NormKind { kLayer, kBatch };
// kBatch here normalizes with batch statistics and keeps no running state.
Tensor Norm(const Tensor& x, NormKind kind, const Tensor& gamma,
            const Tensor& beta, double eps);

enum class ActivationKind { kGelu, kSilu, kSoftplus, kSigmoid };
Tensor Activation(ActivationKind kind, const Tensor& x);
Tensor Gelu(const Tensor& x);  // exact, Gaussian CDF
Tensor Silu(const Tensor& x);
Tensor Softplus(const Tensor& x);
Tensor Sigmoid(const Tensor& x);

// Bilinear resize of NCHW input, half-pixel centers (align_corners = false).
Tensor BilinearInterpolate(const Tensor& x, int64_t out_h, int64_t out_w);

}  // namespace mim

#endif  // MIM_TENSOR_OPS_H_
