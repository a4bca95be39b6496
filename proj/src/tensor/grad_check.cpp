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

#include "tensor/grad_check.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "tensor/random.h"

namespace mim {

double GradCheckReport::MaxRelError() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

std::string GradCheckReport::Summary() const {
  std::ostringstream out;
  out << (passed ? "pass" : "FAIL") << " max_rel_error=" << MaxRelError()
      << " tol=" << tolerance << " floor=" << floor;
  for (const auto& e : entries) {
    if (e.max_rel_error > tolerance) {
      out << "\n  " << e.name << "[" << e.worst_index << "] analytic="
          << e.worst_analytic << " numeric=" << e.worst_numeric
          << " rel=" << e.max_rel_error;
    }
  }
  return out.str();
}

GradCheckReport GradCheck(const std::function<Tensor()>& loss_fn,
                          const std::vector<NamedTensor>& params,
                          const GradCheckOptions& options) {
  PrecisionGuard precision(Precision::kDouble);
  GradCheckReport report;
  report.tolerance = options.tolerance;

  std::vector<Tensor> leaves;
  for (const auto& [name, t] : params) {
    Require(t.is_leaf(), Error::Code::kInvalidArgument,
            "grad check parameters must be leaf tensors");
    leaves.push_back(t);
  }
  for (Tensor& t : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = loss_fn();
  const double loss_value = loss.item();
  Backward(loss);
  std::vector<std::vector<double>> analytic;
  for (Tensor& t : leaves) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
    t.zero_grad();
  }

  auto evaluate = [&]() {
    NoGradGuard no_grad;
    return loss_fn().item();
  };

  // Rounding in the loss limits what a central difference can resolve:
  // about eps * |f| / step. Gradients below that level, scaled so a
  // tolerance-sized error would still be visible, compare absolutely.
  const double resolution = options.noise_margin *
                            std::numeric_limits<double>::epsilon() *
                            std::max(std::abs(loss_value), 1.0) /
                            (options.step * options.tolerance);
  const double floor = std::max(options.abs_floor, resolution);
  report.floor = floor;

  Rng rng(options.seed);
  for (size_t p = 0; p < leaves.size(); ++p) {
    Tensor& t = leaves[p];
    GradCheckEntry entry;
    entry.name = params[p].first;
    std::vector<int64_t> indices(t.numel());
    std::iota(indices.begin(), indices.end(), 0);
    if (options.max_entries > 0 &&
        static_cast<int64_t>(indices.size()) > options.max_entries) {
      rng.Shuffle(indices);
      indices.resize(options.max_entries);
      std::sort(indices.begin(), indices.end());
    }
    for (int64_t idx : indices) {
      auto values = t.mutable_data();
      const double original = values[idx];
      values[idx] = original + options.step;
      const double plus = evaluate();
      values[idx] = original - options.step;
      const double minus = evaluate();
      values[idx] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[p][idx];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++entry.probed;
      if (rel > entry.max_rel_error || entry.worst_index < 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, rel);
        if (rel >= entry.max_rel_error) {
          entry.worst_index = idx;
          entry.worst_analytic = a;
          entry.worst_numeric = numeric;
        }
      }
    }
    if (entry.max_rel_error > options.tolerance) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace mim
