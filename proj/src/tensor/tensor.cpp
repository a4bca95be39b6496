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

#include "tensor/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace mim {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  Tensor::BackwardFn backward;
};

}  // namespace detail

namespace {

std::atomic<uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;
thread_local Precision t_precision = Precision::kDouble;
std::atomic<bool> g_finite_checks{true};

// Op outputs are large and short-lived. Serving them from the heap instead
// of fresh mappings avoids a page-fault storm on every forward pass.
void TuneAllocator() {
#if defined(__GLIBC__)
  static const bool tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)tuned;
#endif
}

std::shared_ptr<detail::Node> NewNode(Shape shape, std::vector<double> value,
                                      bool requires_grad) {
  for (int64_t extent : shape) {
    Require(extent > 0, Error::Code::kShape, "tensor extents must be positive");
  }
  if (static_cast<int64_t>(value.size()) != NumElements(shape)) {
    Fail(Error::Code::kShape, "value count " + std::to_string(value.size()) +
                                  " does not match shape " +
                                  ShapeToString(shape));
  }
  TuneAllocator();
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->id = g_next_id.fetch_add(1);
  return node;
}

}  // namespace

void Fail(Error::Code code, const std::string& message) {
  throw Error(code, message);
}

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t extent : shape) n *= extent;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Precision CurrentPrecision() { return t_precision; }

PrecisionGuard::PrecisionGuard(Precision precision) : previous_(t_precision) {
  t_precision = precision;
}
PrecisionGuard::~PrecisionGuard() { t_precision = previous_; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool GradEnabled() { return t_grad_enabled; }

void SetFiniteChecks(bool enabled) { g_finite_checks.store(enabled); }
bool FiniteChecksEnabled() { return g_finite_checks.load(); }

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::Full(Shape shape, double value, bool requires_grad) {
  const int64_t n = NumElements(shape);
  return FromData(std::move(shape), std::vector<double>(n, value),
                  requires_grad);
}

Tensor Tensor::FromData(Shape shape, std::vector<double> values,
                        bool requires_grad) {
  return Tensor(NewNode(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::Scalar(double value) { return FromData({1}, {value}); }

Tensor Tensor::MakeResult(const char* op_name, Shape shape,
                          std::vector<double> values,
                          std::vector<Tensor> inputs, BackwardFn backward) {
  if (t_precision == Precision::kSingle) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
  }
  if (g_finite_checks.load(std::memory_order_relaxed)) {
    for (double v : values) {
      if (!std::isfinite(v)) {
        Fail(Error::Code::kNumeric,
             std::string("non-finite value produced by ") + op_name);
      }
    }
  }
  bool needs_grad = false;
  if (t_grad_enabled) {
    for (const Tensor& in : inputs) {
      if (in.defined() && in.node_->requires_grad) needs_grad = true;
    }
  }
  auto node = NewNode(std::move(shape), std::move(values), needs_grad);
  node->op = op_name;
  if (needs_grad) {
    node->inputs.reserve(inputs.size());
    // Undefined optional inputs stay as null slots so indices line up.
    for (Tensor& in : inputs) node->inputs.push_back(std::move(in.node_));
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::rank() const { return static_cast<int64_t>(node_->shape.size()); }

int64_t Tensor::dim(int64_t axis) const {
  const int64_t r = rank();
  if (axis < 0) axis += r;
  Require(axis >= 0 && axis < r, Error::Code::kShape, "axis out of range");
  return node_->shape[axis];
}

int64_t Tensor::numel() const {
  return static_cast<int64_t>(node_->value.size());
}

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() {
  Require(is_leaf(), Error::Code::kInvalidArgument,
          "only leaf tensors can be modified in place");
  return node_->value;
}

double Tensor::item() const {
  Require(numel() == 1, Error::Code::kShape, "item() needs a single element");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool requires_grad) {
  Require(is_leaf(), Error::Code::kInvalidArgument,
          "requires_grad can only be set on leaf tensors");
  node_->requires_grad = requires_grad;
}

bool Tensor::is_leaf() const { return !node_->backward; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  return FromData(node_->shape, node_->value, false);
}

void Backward(const Tensor& loss) {
  Require(loss.defined(), Error::Code::kInvalidArgument, "undefined loss");
  Require(loss.numel() == 1, Error::Code::kShape,
          "backward needs a scalar loss");
  if (!loss.requires_grad()) {
    Fail(Error::Code::kInvalidArgument,
         "loss does not depend on any tensor that requires grad");
  }

  // Shared ownership keeps upstream nodes alive while edges are released.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{loss.node_};
  seen.insert(loss.node_.get());
  while (!stack.empty()) {
    std::shared_ptr<detail::Node> node = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : node->inputs) {
      if (in && in->requires_grad && seen.insert(in.get()).second) {
        stack.push_back(in);
      }
    }
    order.push_back(std::move(node));
  }
  // Creation order is a valid topological order; reverse it.
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->id > b->id; });

  detail::Node* root = loss.node_.get();
  if (root->grad.empty()) root->grad.assign(1, 0.0);
  root->grad[0] += 1.0;

  std::vector<std::vector<double>*> sinks;
  for (const auto& node : order) {
    if (!node->backward) continue;
    if (node->grad.empty()) {
      node->inputs.clear();
      node->backward = nullptr;
      continue;
    }
    sinks.assign(node->inputs.size(), nullptr);
    for (size_t i = 0; i < node->inputs.size(); ++i) {
      detail::Node* in = node->inputs[i].get();
      if (!in || !in->requires_grad) continue;
      if (in->grad.empty()) in->grad.assign(in->value.size(), 0.0);
      sinks[i] = &in->grad;
    }
    node->backward(node->grad, sinks);
    // Intermediate results keep neither their gradient nor their graph.
    std::vector<double>().swap(node->grad);
    node->inputs.clear();
    node->backward = nullptr;
  }
}

}  // namespace mim
