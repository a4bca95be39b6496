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

#ifndef MIM_TENSOR_GRAD_CHECK_H_
#define MIM_TENSOR_GRAD_CHECK_H_

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tensor/tensor.h"

namespace mim {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so gradients that are zero up
  // to rounding compare on an absolute scale.
  double abs_floor = 1e-6;
  // The floor is raised to noise_margin * eps * |loss| / (step * tolerance)
  // when that is larger.
  double noise_margin = 10.0;
  // Entries probed per parameter; <= 0 probes all of them.
  int64_t max_entries = 0;
  uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  int64_t probed = 0;
  double max_rel_error = 0.0;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  double floor = 0.0;  // denominator floor actually used
  bool passed = true;

  double MaxRelError() const;
  std::string Summary() const;
};

using NamedTensor = std::pair<std::string, Tensor>;

// Compares reverse-mode gradients of loss_fn() against central differences
// for every listed leaf parameter. Always evaluates in double precision.
GradCheckReport GradCheck(const std::function<Tensor()>& loss_fn,
                          const std::vector<NamedTensor>& params,
                          const GradCheckOptions& options = {});

}  // namespace mim

#endif  // MIM_TENSOR_GRAD_CHECK_H_
