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

#ifndef MIM_TENSOR_TENSOR_H_
#define MIM_TENSOR_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mim {

using Shape = std::vector<int64_t>;

// Every failure inside the library is reported as an Error. The C API maps
// the code onto its status enum.
class Error : public std::runtime_error {
 public:
  enum class Code {
    kInvalidArgument,
    kShape,
    kNumeric,
    kIo,
    kConfig,
    kNotFound,
    kInternal,
  };

  Error(Code code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Code code() const { return code_; }

 private:
  Code code_;
};

[[noreturn]] void Fail(Error::Code code, const std::string& message);

inline void Require(bool condition, Error::Code code, const char* message) {
  if (!condition) Fail(code, message);
}

int64_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Storage is always binary64. In kSingle mode every op output is rounded to
// the nearest binary32 value before it is stored.
enum class Precision { kSingle, kDouble };

Precision CurrentPrecision();

class PrecisionGuard {
 public:
  explicit PrecisionGuard(Precision precision);
  ~PrecisionGuard();
  PrecisionGuard(const PrecisionGuard&) = delete;
  PrecisionGuard& operator=(const PrecisionGuard&) = delete;

 private:
  Precision previous_;
};

// Disables graph recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

// NaN/Inf detection on op outputs. On by default.
void SetFiniteChecks(bool enabled);
bool FiniteChecksEnabled();

namespace detail {
struct Node;
}  // namespace detail

class Tensor {
 public:
  // Accumulates d(loss)/d(input_i) into input_grads[i]. A null entry means
  // that input does not need a gradient.
  using BackwardFn =
      std::function<void(std::span<const double> grad_out,
                         std::span<std::vector<double>* const> input_grads)>;

  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, double value, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<double> values,
                         bool requires_grad = false);
  static Tensor Scalar(double value);

  // Builds an op result. The graph edge is recorded only when grad mode is
  // on and some input requires a gradient.
  static Tensor MakeResult(const char* op_name, Shape shape,
                           std::vector<double> values,
                           std::vector<Tensor> inputs, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t rank() const;
  int64_t dim(int64_t axis) const;
  int64_t numel() const;

  std::span<const double> data() const;
  // Only leaf tensors may be written in place.
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor detach() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend void Backward(const Tensor& loss);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode pass from a scalar loss. Leaf tensors that require grad
// receive accumulated gradients; the recorded graph is released afterwards.
void Backward(const Tensor& loss);

}  // namespace mim

#endif  // MIM_TENSOR_TENSOR_H_
