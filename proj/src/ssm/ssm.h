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

#ifndef MIM_SSM_SSM_H_
#define MIM_SSM_SSM_H_

#include <cstdint>
#include <string>
#include <vector>

#include "tensor/grad_check.h"
#include "tensor/random.h"
#include "tensor/tensor.h"

namespace mim::ssm {

inline constexpr int64_t kDefaultStateDim = 16;

// Selective state space parameters for E channels with an N-dimensional
// diagonal state per channel.
struct SsmParams {
  Tensor a_log;    // [E, N]; A = -exp(a_log) < 0
  Tensor d_skip;   // [E]
  Tensor x_proj;   // [2N + E, E]; rows map x_t to (B_t, C_t, delta_raw_t)
  Tensor dt_bias;  // [E]; delta = softplus(delta_raw + dt_bias)

  int64_t channels() const { return d_skip.numel(); }
  int64_t state_dim() const { return a_log.dim(1); }
  void AppendNamed(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// A[e, n] = -(n + 1); D = 1; initial delta log-uniform in [0.001, 0.1].
SsmParams InitSsmParams(int64_t channels, int64_t state_dim, Rng& rng);

struct DiscretizedPair {
  Tensor a_bar;  // [..., L, E, N]
  Tensor b_bar;  // [..., L, E, N]
};

// Zero-order hold for A and the first-order form delta * B for B:
//   a_bar[l,e,n] = exp(delta[l,e] * a[e,n]),  b_bar[l,e,n] = delta[l,e] * b[l,n].
// delta is [..., L, E], a is [E, N], b is [..., L, N].
DiscretizedPair Discretize(const Tensor& delta, const Tensor& a,
                           const Tensor& b, bool allow_zero_delta = false);

// Sequential recurrence with h_0 = 0:
//   h_l = a_bar_l * h_{l-1} + b_bar_l * u_l,   y_l = c_l . h_l + d_skip * u_l
// u is [..., L, E], a_bar/b_bar are [..., L, E, N], c is [..., L, N].
Tensor SelectiveScan(const Tensor& u, const Tensor& a_bar, const Tensor& b_bar,
                     const Tensor& c, const Tensor& d_skip);

// Discretize followed by SelectiveScan without materializing the [L, E, N]
// coefficient tensors. Value-equivalent to the two-step composition.
Tensor FusedSelectiveScan(const Tensor& u, const Tensor& delta,
                          const Tensor& a, const Tensor& b, const Tensor& c,
                          const Tensor& d_skip);

// S6: input-dependent (B, C, delta) projection, then the selective scan.
// x is [..., L, E].
Tensor S6Forward(const Tensor& x, const SsmParams& params);

}  // namespace mim::ssm

#endif  // MIM_SSM_SSM_H_
