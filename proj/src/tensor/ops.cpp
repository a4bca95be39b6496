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

#include "tensor/ops.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tensor/flop_counter.h"
#include "tensor/gemm.h"
#include "tensor/parallel.h"

namespace mim {

namespace {

using Grads = std::span<std::vector<double>* const>;

int64_t NormalizeAxis(int64_t axis, int64_t rank) {
  if (axis < 0) axis += rank;
  Require(axis >= 0 && axis < rank, Error::Code::kShape, "axis out of range");
  return axis;
}

// Splits a shape around an axis into (outer, extent, inner).
struct AxisSplit {
  int64_t outer = 1;
  int64_t extent = 1;
  int64_t inner = 1;
};

AxisSplit SplitAt(const Shape& shape, int64_t axis) {
  AxisSplit s;
  for (int64_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

inline void Axpy(double alpha, const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Fixed four-lane accumulation order keeps results reproducible.
inline double Dot(const double* a, const double* b, int64_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
  Shape out;
  std::vector<int64_t> a_strides;
  std::vector<int64_t> b_strides;
  enum class Mode { kSame, kScalarB, kScalarA, kTrailingB, kGeneral } mode;
  int64_t trailing = 1;
};

std::vector<int64_t> ContiguousStrides(const Shape& shape) {
  std::vector<int64_t> strides(shape.size(), 1);
  for (int64_t i = static_cast<int64_t>(shape.size()) - 2; i >= 0; --i) {
    strides[i] = strides[i + 1] * shape[i + 1];
  }
  return strides;
}

Broadcast PlanBroadcast(const Shape& a, const Shape& b) {
  Broadcast plan;
  const size_t rank = std::max(a.size(), b.size());
  Shape pa(rank - a.size(), 1), pb(rank - b.size(), 1);
  pa.insert(pa.end(), a.begin(), a.end());
  pb.insert(pb.end(), b.begin(), b.end());
  plan.out.resize(rank);
  for (size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      Fail(Error::Code::kShape, "cannot broadcast " + ShapeToString(a) +
                                    " with " + ShapeToString(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  const int64_t nb = NumElements(b);
  const int64_t na = NumElements(a);
  if (pa == pb) {
    plan.mode = Broadcast::Mode::kSame;
  } else if (nb == 1) {
    plan.mode = Broadcast::Mode::kScalarB;
  } else if (na == 1) {
    plan.mode = Broadcast::Mode::kScalarA;
  } else if (pa == plan.out && b.size() >= 1 &&
             [&] {
               // b equals a trailing block of a (after dropping leading ones).
               size_t first = 0;
               while (first < b.size() && b[first] == 1) ++first;
               for (size_t i = first; i < b.size(); ++i) {
                 if (b[i] != a[a.size() - b.size() + i]) return false;
               }
               return true;
             }()) {
    plan.mode = Broadcast::Mode::kTrailingB;
    plan.trailing = nb;
  } else {
    plan.mode = Broadcast::Mode::kGeneral;
  }
  auto strides_for = [&](const Shape& padded) {
    std::vector<int64_t> s = ContiguousStrides(padded);
    for (size_t i = 0; i < rank; ++i) {
      if (padded[i] == 1) s[i] = 0;
    }
    return s;
  };
  plan.a_strides = strides_for(pa);
  plan.b_strides = strides_for(pb);
  return plan;
}

// Calls fn(out_index, a_index, b_index) for every output element in order.
template <typename Fn>
void ForEachBroadcast(const Broadcast& plan, Fn&& fn) {
  const int64_t n = NumElements(plan.out);
  switch (plan.mode) {
    case Broadcast::Mode::kSame:
      for (int64_t i = 0; i < n; ++i) fn(i, i, i);
      return;
    case Broadcast::Mode::kScalarB:
      for (int64_t i = 0; i < n; ++i) fn(i, i, 0);
      return;
    case Broadcast::Mode::kScalarA:
      for (int64_t i = 0; i < n; ++i) fn(i, 0, i);
      return;
    case Broadcast::Mode::kTrailingB:
      for (int64_t i = 0; i < n; ++i) fn(i, i, i % plan.trailing);
      return;
    case Broadcast::Mode::kGeneral:
      break;
  }
  const size_t rank = plan.out.size();
  std::vector<int64_t> index(rank, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (int64_t d = static_cast<int64_t>(rank) - 1; d >= 0; --d) {
      ++index[d];
      ia += plan.a_strides[d];
      ib += plan.b_strides[d];
      if (index[d] < plan.out[d]) break;
      ia -= plan.a_strides[d] * plan.out[d];
      ib -= plan.b_strides[d] * plan.out[d];
      index[d] = 0;
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor Binary(BinaryKind kind, const Tensor& a, const Tensor& b) {
  Broadcast plan = PlanBroadcast(a.shape(), b.shape());
  const int64_t n = NumElements(plan.out);
  std::vector<double> out(n);
  auto av = a.data();
  auto bv = b.data();
  switch (kind) {
    case BinaryKind::kAdd:
      ForEachBroadcast(plan, [&](int64_t i, int64_t ia, int64_t ib) {
        out[i] = av[ia] + bv[ib];
      });
      break;
    case BinaryKind::kSub:
      ForEachBroadcast(plan, [&](int64_t i, int64_t ia, int64_t ib) {
        out[i] = av[ia] - bv[ib];
      });
      break;
    case BinaryKind::kMul:
      ForEachBroadcast(plan, [&](int64_t i, int64_t ia, int64_t ib) {
        out[i] = av[ia] * bv[ib];
      });
      break;
    case BinaryKind::kDiv:
      ForEachBroadcast(plan, [&](int64_t i, int64_t ia, int64_t ib) {
        out[i] = av[ia] / bv[ib];
      });
      break;
  }
  RecordFlops(FlopKind::kElementwise, n);
  static constexpr const char* kNames[] = {"add", "sub", "mul", "div"};
  Shape out_shape = plan.out;
  return Tensor::MakeResult(
      kNames[static_cast<int>(kind)], std::move(out_shape), std::move(out),
      {a, b}, [kind, plan, a, b](std::span<const double> g, Grads grads) {
        auto av = a.data();
        auto bv = b.data();
        std::vector<double>* ga = grads[0];
        std::vector<double>* gb = grads[1];
        ForEachBroadcast(plan, [&](int64_t i, int64_t ia, int64_t ib) {
          switch (kind) {
            case BinaryKind::kAdd:
              if (ga) (*ga)[ia] += g[i];
              if (gb) (*gb)[ib] += g[i];
              break;
            case BinaryKind::kSub:
              if (ga) (*ga)[ia] += g[i];
              if (gb) (*gb)[ib] -= g[i];
              break;
            case BinaryKind::kMul:
              if (ga) (*ga)[ia] += g[i] * bv[ib];
              if (gb) (*gb)[ib] += g[i] * av[ia];
              break;
            case BinaryKind::kDiv:
              if (ga) (*ga)[ia] += g[i] / bv[ib];
              if (gb) (*gb)[ib] -= g[i] * av[ia] / (bv[ib] * bv[ib]);
              break;
          }
        });
      });
}

// Elementwise map. The derivative receives (x, y); y is kept for the
// backward pass only when kUsesOutput is set.
template <bool kUsesOutput = false, typename F, typename DF>
Tensor Unary(const char* name, const Tensor& x, F f, DF df,
             FlopKind kind = FlopKind::kElementwise) {
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  RecordFlops(kind, kind == FlopKind::kPointwise ? 5 * xv.size() : xv.size());
  std::vector<double> y;
  if constexpr (kUsesOutput) y = out;
  return Tensor::MakeResult(
      name, x.shape(), std::move(out), {x},
      [x, y = std::move(y), df](std::span<const double> g, Grads grads) {
        auto xv = x.data();
        auto& gx = *grads[0];
        for (size_t i = 0; i < xv.size(); ++i) {
          gx[i] += g[i] * df(xv[i], kUsesOutput ? y[i] : 0.0);
        }
      });
}

double StableSigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Arithmetic

Tensor Add(const Tensor& a, const Tensor& b) {
  return Binary(BinaryKind::kAdd, a, b);
}
Tensor Sub(const Tensor& a, const Tensor& b) {
  return Binary(BinaryKind::kSub, a, b);
}
Tensor Mul(const Tensor& a, const Tensor& b) {
  return Binary(BinaryKind::kMul, a, b);
}
Tensor Div(const Tensor& a, const Tensor& b) {
  return Binary(BinaryKind::kDiv, a, b);
}

Tensor Neg(const Tensor& x) { return Scale(x, -1.0); }

Tensor Scale(const Tensor& x, double factor) {
  return Unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor AddScalar(const Tensor& x, double offset) {
  return Unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor Exp(const Tensor& x) {
  return Unary<true>(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor Log(const Tensor& x) {
  for (double v : x.data()) {
    Require(v > 0, Error::Code::kNumeric, "log of a non-positive value");
  }
  return Unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor Sqrt(const Tensor& x) {
  for (double v : x.data()) {
    Require(v >= 0, Error::Code::kNumeric, "sqrt of a negative value");
  }
  return Unary<true>(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor Square(const Tensor& x) {
  return Unary(
      "square", x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor Sum(const Tensor& x) {
  double total = 0;
  for (double v : x.data()) total += v;
  RecordFlops(FlopKind::kElementwise, x.numel());
  return Tensor::MakeResult("sum", {1}, {total}, {x},
                            [](std::span<const double> g, Grads grads) {
                              for (double& v : *grads[0]) v += g[0];
                            });
}

Tensor Sum(const Tensor& x, int64_t axis, bool keepdim) {
  axis = NormalizeAxis(axis, x.rank());
  const AxisSplit s = SplitAt(x.shape(), axis);
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto xv = x.data();
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t k = 0; k < s.extent; ++k) {
      const double* src = xv.data() + (o * s.extent + k) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  RecordFlops(FlopKind::kElementwise, x.numel());
  Shape shape = x.shape();
  if (keepdim) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + axis);
    if (shape.empty()) shape = {1};
  }
  return Tensor::MakeResult(
      "sum_axis", std::move(shape), std::move(out), {x},
      [s](std::span<const double> g, Grads grads) {
        auto& gx = *grads[0];
        for (int64_t o = 0; o < s.outer; ++o) {
          for (int64_t k = 0; k < s.extent; ++k) {
            double* dst = gx.data() + (o * s.extent + k) * s.inner;
            const double* src = g.data() + o * s.inner;
            for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
          }
        }
      });
}

Tensor Mean(const Tensor& x) {
  return Scale(Sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor Mean(const Tensor& x, int64_t axis, bool keepdim) {
  const int64_t extent = x.dim(axis);
  return Scale(Sum(x, axis, keepdim), 1.0 / static_cast<double>(extent));
}

// ---------------------------------------------------------------------------
// Products

Tensor MatMul(const Tensor& x, const Tensor& w) {
  Require(w.rank() == 2, Error::Code::kShape, "matmul weight must be rank 2");
  const int64_t k_dim = w.dim(0);
  const int64_t n_dim = w.dim(1);
  if (x.dim(-1) != k_dim) {
    Fail(Error::Code::kShape, "matmul extent mismatch: " +
                                  ShapeToString(x.shape()) + " x " +
                                  ShapeToString(w.shape()));
  }
  const int64_t rows = x.numel() / k_dim;
  std::vector<double> out(rows * n_dim, 0.0);
  const double* xv = x.data().data();
  const double* wv = w.data().data();
  ParallelFor(rows, [&](int64_t begin, int64_t end) {
    Gemm(false, false, end - begin, n_dim, k_dim, xv + begin * k_dim, k_dim, wv,
         n_dim, out.data() + begin * n_dim, n_dim);
  }, 64);
  RecordFlops(FlopKind::kMac, 2ull * rows * k_dim * n_dim);
  Shape shape = x.shape();
  shape.back() = n_dim;
  return Tensor::MakeResult(
      "matmul", std::move(shape), std::move(out), {x, w},
      [x, w, rows, k_dim, n_dim](std::span<const double> g, Grads grads) {
        if (grads[0]) {
          Gemm(false, true, rows, k_dim, n_dim, g.data(), n_dim, w.data().data(), n_dim,
               grads[0]->data(), k_dim);
        }
        if (grads[1]) {
          Gemm(true, false, k_dim, n_dim, rows, x.data().data(), k_dim, g.data(), n_dim,
               grads[1]->data(), n_dim);
        }
      });
}

Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Require(weight.rank() == 2, Error::Code::kShape,
          "linear weight must be [out, in]");
  const int64_t out_dim = weight.dim(0);
  const int64_t in_dim = weight.dim(1);
  if (x.dim(-1) != in_dim) {
    Fail(Error::Code::kShape, "linear extent mismatch: input " +
                                  ShapeToString(x.shape()) + ", weight " +
                                  ShapeToString(weight.shape()));
  }
  if (bias.defined()) {
    Require(bias.numel() == out_dim, Error::Code::kShape,
            "linear bias extent mismatch");
  }
  const int64_t rows = x.numel() / in_dim;
  std::vector<double> out(rows * out_dim, 0.0);
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  if (bias.defined()) {
    const double* bv = bias.data().data();
    for (int64_t r = 0; r < rows; ++r) std::copy(bv, bv + out_dim, out.data() + r * out_dim);
  }
  ParallelFor(rows, [&](int64_t begin, int64_t end) {
    Gemm(false, true, end - begin, out_dim, in_dim, xv + begin * in_dim, in_dim, wv,
         in_dim, out.data() + begin * out_dim, out_dim);
  }, 64);
  RecordFlops(FlopKind::kMac, 2ull * rows * in_dim * out_dim);
  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::MakeResult(
      "linear", std::move(shape), std::move(out), std::move(inputs),
      [x, weight, rows, in_dim, out_dim](std::span<const double> g, Grads grads) {
        if (grads[0]) {
          Gemm(false, false, rows, in_dim, out_dim, g.data(), out_dim,
               weight.data().data(), in_dim, grads[0]->data(), in_dim);
        }
        if (grads[1]) {
          Gemm(true, false, out_dim, in_dim, rows, g.data(), out_dim, x.data().data(),
               in_dim, grads[1]->data(), in_dim);
        }
        if (grads.size() > 2 && grads[2]) {
          double* gb = grads[2]->data();
          for (int64_t r = 0; r < rows; ++r) {
            const double* gr = g.data() + r * out_dim;
            for (int64_t o = 0; o < out_dim; ++o) gb[o] += gr[o];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Layout

Tensor Reshape(const Tensor& x, Shape shape) {
  int64_t known = 1;
  int64_t infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      Require(infer < 0, Error::Code::kShape, "reshape allows one -1 extent");
      infer = static_cast<int64_t>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    Require(known > 0 && x.numel() % known == 0, Error::Code::kShape,
            "reshape cannot infer extent");
    shape[infer] = x.numel() / known;
  }
  if (NumElements(shape) != x.numel()) {
    Fail(Error::Code::kShape, "cannot reshape " + ShapeToString(x.shape()) +
                                  " to " + ShapeToString(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::MakeResult("reshape", std::move(shape), std::move(out), {x},
                            [](std::span<const double> g, Grads grads) {
                              auto& gx = *grads[0];
                              for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                            });
}

Tensor Permute(const Tensor& x, const std::vector<int64_t>& axes) {
  const int64_t rank = x.rank();
  Require(static_cast<int64_t>(axes.size()) == rank, Error::Code::kShape,
          "permute needs one axis per dimension");
  std::vector<bool> used(rank, false);
  for (int64_t a : axes) {
    Require(a >= 0 && a < rank && !used[a], Error::Code::kShape,
            "permute axes must be a permutation");
    used[a] = true;
  }
  const Shape& in_shape = x.shape();
  const std::vector<int64_t> in_strides = ContiguousStrides(in_shape);
  Shape out_shape(rank);
  std::vector<int64_t> src_strides(rank);
  for (int64_t d = 0; d < rank; ++d) {
    out_shape[d] = in_shape[axes[d]];
    src_strides[d] = in_strides[axes[d]];
  }
  const int64_t n = x.numel();
  // src_index[i] maps output position i to its input position.
  auto gather_map = std::make_shared<std::vector<int64_t>>(n);
  {
    std::vector<int64_t> index(rank, 0);
    int64_t src = 0;
    for (int64_t i = 0; i < n; ++i) {
      (*gather_map)[i] = src;
      for (int64_t d = rank - 1; d >= 0; --d) {
        ++index[d];
        src += src_strides[d];
        if (index[d] < out_shape[d]) break;
        src -= src_strides[d] * out_shape[d];
        index[d] = 0;
      }
    }
  }
  auto xv = x.data();
  std::vector<double> out(n);
  for (int64_t i = 0; i < n; ++i) out[i] = xv[(*gather_map)[i]];
  return Tensor::MakeResult(
      "permute", std::move(out_shape), std::move(out), {x},
      [gather_map](std::span<const double> g, Grads grads) {
        auto& gx = *grads[0];
        const auto& map = *gather_map;
        for (size_t i = 0; i < map.size(); ++i) gx[map[i]] += g[i];
      });
}

Tensor Concat(const std::vector<Tensor>& parts, int64_t axis) {
  Require(!parts.empty(), Error::Code::kShape, "concat needs inputs");
  const int64_t rank = parts[0].rank();
  axis = NormalizeAxis(axis, rank);
  Shape shape = parts[0].shape();
  std::vector<int64_t> extents;
  int64_t total = 0;
  for (const Tensor& p : parts) {
    Require(p.rank() == rank, Error::Code::kShape, "concat rank mismatch");
    for (int64_t d = 0; d < rank; ++d) {
      if (d != axis && p.dim(d) != shape[d]) {
        Fail(Error::Code::kShape, "concat extent mismatch: " +
                                      ShapeToString(p.shape()) + " vs " +
                                      ShapeToString(shape));
      }
    }
    extents.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  shape[axis] = total;
  const AxisSplit s = SplitAt(shape, axis);
  std::vector<double> out(NumElements(shape));
  int64_t offset = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].data();
    const int64_t block = extents[p] * s.inner;
    for (int64_t o = 0; o < s.outer; ++o) {
      std::copy(pv.begin() + o * block, pv.begin() + (o + 1) * block,
                out.begin() + (o * total + offset) * s.inner);
    }
    offset += extents[p];
  }
  return Tensor::MakeResult(
      "concat", std::move(shape), std::move(out), parts,
      [s, extents, total](std::span<const double> g, Grads grads) {
        int64_t offset = 0;
        for (size_t p = 0; p < extents.size(); ++p) {
          const int64_t block = extents[p] * s.inner;
          if (grads[p]) {
            auto& gp = *grads[p];
            for (int64_t o = 0; o < s.outer; ++o) {
              const double* src = g.data() + (o * total + offset) * s.inner;
              double* dst = gp.data() + o * block;
              for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
            }
          }
          offset += extents[p];
        }
      });
}

Tensor Slice(const Tensor& x, int64_t axis, int64_t start, int64_t length) {
  axis = NormalizeAxis(axis, x.rank());
  const AxisSplit s = SplitAt(x.shape(), axis);
  Require(start >= 0 && length > 0 && start + length <= s.extent,
          Error::Code::kShape, "slice out of range");
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<double> out(s.outer * length * s.inner);
  auto xv = x.data();
  for (int64_t o = 0; o < s.outer; ++o) {
    std::copy(xv.begin() + (o * s.extent + start) * s.inner,
              xv.begin() + (o * s.extent + start + length) * s.inner,
              out.begin() + o * length * s.inner);
  }
  return Tensor::MakeResult(
      "slice", std::move(shape), std::move(out), {x},
      [s, start, length](std::span<const double> g, Grads grads) {
        auto& gx = *grads[0];
        const int64_t block = length * s.inner;
        for (int64_t o = 0; o < s.outer; ++o) {
          double* dst = gx.data() + (o * s.extent + start) * s.inner;
          const double* src = g.data() + o * block;
          for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      });
}

std::vector<Tensor> Split(const Tensor& x, int64_t axis,
                          const std::vector<int64_t>& sizes) {
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  Require(total == x.dim(axis), Error::Code::kShape,
          "split sizes must cover the axis");
  std::vector<Tensor> parts;
  int64_t start = 0;
  for (int64_t s : sizes) {
    parts.push_back(Slice(x, axis, start, s));
    start += s;
  }
  return parts;
}

Tensor IndexSelect(const Tensor& x, int64_t axis,
                   const std::vector<int64_t>& indices) {
  axis = NormalizeAxis(axis, x.rank());
  const AxisSplit s = SplitAt(x.shape(), axis);
  for (int64_t idx : indices) {
    Require(idx >= 0 && idx < s.extent, Error::Code::kShape,
            "index_select index out of range");
  }
  const int64_t count = static_cast<int64_t>(indices.size());
  Require(count > 0, Error::Code::kShape, "index_select needs indices");
  Shape shape = x.shape();
  shape[axis] = count;
  std::vector<double> out(s.outer * count * s.inner);
  auto xv = x.data();
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t k = 0; k < count; ++k) {
      const double* src = xv.data() + (o * s.extent + indices[k]) * s.inner;
      std::copy(src, src + s.inner, out.begin() + (o * count + k) * s.inner);
    }
  }
  return Tensor::MakeResult(
      "index_select", std::move(shape), std::move(out), {x},
      [s, indices, count](std::span<const double> g, Grads grads) {
        auto& gx = *grads[0];
        for (int64_t o = 0; o < s.outer; ++o) {
          for (int64_t k = 0; k < count; ++k) {
            double* dst = gx.data() + (o * s.extent + indices[k]) * s.inner;
            const double* src = g.data() + (o * count + k) * s.inner;
            for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

struct ConvGeometry {
  int64_t n, c, h, w;        // input
  int64_t f, kh, kw;         // filters
  int64_t stride, pad, groups;
  int64_t ho, wo;
  int64_t cg() const { return c / groups; }
  int64_t fg() const { return f / groups; }
  int64_t patch() const { return cg() * kh * kw; }
};

// cols[(ci*kh + a)*kw + b][oy*wo + ox] for channels [c0, c0 + cg).
void Im2Col(const ConvGeometry& g, const double* x, int64_t c0, double* cols) {
  const int64_t plane = g.ho * g.wo;
  for (int64_t ci = 0; ci < g.cg(); ++ci) {
    const double* xc = x + (c0 + ci) * g.h * g.w;
    for (int64_t a = 0; a < g.kh; ++a) {
      for (int64_t b = 0; b < g.kw; ++b) {
        double* row = cols + ((ci * g.kh + a) * g.kw + b) * plane;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + a;
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + b;
            dst[ox] = (ix < 0 || ix >= g.w) ? 0.0 : xc[iy * g.w + ix];
          }
        }
      }
    }
  }
}

void Col2Im(const ConvGeometry& g, const double* cols, int64_t c0, double* gx) {
  const int64_t plane = g.ho * g.wo;
  for (int64_t ci = 0; ci < g.cg(); ++ci) {
    double* xc = gx + (c0 + ci) * g.h * g.w;
    for (int64_t a = 0; a < g.kh; ++a) {
      for (int64_t b = 0; b < g.kw; ++b) {
        const double* row = cols + ((ci * g.kh + a) * g.kw + b) * plane;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = oy * g.stride - g.pad + a;
          if (iy < 0 || iy >= g.h) continue;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + b;
            if (ix >= 0 && ix < g.w) xc[iy * g.w + ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int64_t stride, int64_t padding, int64_t groups) {
  Require(x.rank() == 4, Error::Code::kShape, "conv2d input must be NCHW");
  Require(weight.rank() == 4, Error::Code::kShape,
          "conv2d weight must be [F, C/groups, kh, kw]");
  Require(stride >= 1 && padding >= 0 && groups >= 1,
          Error::Code::kInvalidArgument, "conv2d stride/padding/groups invalid");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
                 weight.dim(0), weight.dim(2), weight.dim(3),
                 stride, padding, groups, 0, 0};
  Require(g.c % groups == 0 && g.f % groups == 0, Error::Code::kShape,
          "conv2d channels must be divisible by groups");
  if (weight.dim(1) != g.cg()) {
    Fail(Error::Code::kShape, "conv2d weight " + ShapeToString(weight.shape()) +
                                  " does not match input " +
                                  ShapeToString(x.shape()));
  }
  const int64_t span_h = g.h + 2 * padding - g.kh;
  const int64_t span_w = g.w + 2 * padding - g.kw;
  Require(span_h >= 0 && span_w >= 0, Error::Code::kShape,
          "conv2d kernel larger than padded input");
  g.ho = span_h / stride + 1;
  g.wo = span_w / stride + 1;
  if (bias.defined()) {
    Require(bias.numel() == g.f, Error::Code::kShape, "conv2d bias mismatch");
  }

  const int64_t plane = g.ho * g.wo;
  std::vector<double> out(g.n * g.f * plane, 0.0);
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  const double* bv = bias.defined() ? bias.data().data() : nullptr;
  ParallelFor(g.n, [&](int64_t begin, int64_t end) {
    std::vector<double> cols(g.patch() * plane);
    for (int64_t n = begin; n < end; ++n) {
      const double* xn = xv + n * g.c * g.h * g.w;
      for (int64_t grp = 0; grp < groups; ++grp) {
        Im2Col(g, xn, grp * g.cg(), cols.data());
        double* y = out.data() + (n * g.f + grp * g.fg()) * plane;
        if (bv) {
          for (int64_t fi = 0; fi < g.fg(); ++fi) {
            std::fill(y + fi * plane, y + (fi + 1) * plane, bv[grp * g.fg() + fi]);
          }
        }
        Gemm(false, false, g.fg(), plane, g.patch(), wv + grp * g.fg() * g.patch(),
             g.patch(), cols.data(), plane, y, plane);
      }
    }
  });
  RecordFlops(FlopKind::kMac, 2ull * g.n * g.f * plane * g.patch());

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::MakeResult(
      "conv2d", {g.n, g.f, g.ho, g.wo}, std::move(out), std::move(inputs),
      [x, weight, g](std::span<const double> go, Grads grads) {
        const int64_t plane = g.ho * g.wo;
        const double* xv = x.data().data();
        const double* wv = weight.data().data();
        std::vector<double> cols(g.patch() * plane);
        std::vector<double> gcols(g.patch() * plane);
        for (int64_t n = 0; n < g.n; ++n) {
          const double* xn = xv + n * g.c * g.h * g.w;
          for (int64_t grp = 0; grp < g.groups; ++grp) {
            if (grads[1]) Im2Col(g, xn, grp * g.cg(), cols.data());
            const double* gy = go.data() + (n * g.f + grp * g.fg()) * plane;
            const double* wg = wv + grp * g.fg() * g.patch();
            if (grads[0]) {
              std::fill(gcols.begin(), gcols.end(), 0.0);
              Gemm(true, false, g.patch(), plane, g.fg(), wg, g.patch(), gy, plane,
                   gcols.data(), plane);
            }
            if (grads[1]) {
              Gemm(false, true, g.fg(), g.patch(), plane, gy, plane, cols.data(), plane,
                   grads[1]->data() + grp * g.fg() * g.patch(), g.patch());
            }
            if (grads.size() > 2 && grads[2]) {
              for (int64_t fi = 0; fi < g.fg(); ++fi) {
                double acc = 0;
                for (int64_t p = 0; p < plane; ++p) acc += gy[fi * plane + p];
                (*grads[2])[grp * g.fg() + fi] += acc;
              }
            }
            if (grads[0]) {
              Col2Im(g, gcols.data(), grp * g.cg(),
                     grads[0]->data() + n * g.c * g.h * g.w);
            }
          }
        }
      });
}

Tensor TransposedConv2d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, int64_t stride) {
  Require(stride >= 1, Error::Code::kInvalidArgument,
          "transposed conv stride must be >= 1");
  Require(x.rank() == 4 && weight.rank() == 4, Error::Code::kShape,
          "transposed conv expects NCHW input and [C, F, kh, kw] weight");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (weight.dim(0) != c) {
    Fail(Error::Code::kShape, "transposed conv weight " +
                                  ShapeToString(weight.shape()) +
                                  " does not match input " +
                                  ShapeToString(x.shape()));
  }
  const int64_t f = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  const int64_t ho = stride * (h - 1) + kh;
  const int64_t wo = stride * (w - 1) + kw;
  if (bias.defined()) {
    Require(bias.numel() == f, Error::Code::kShape,
            "transposed conv bias mismatch");
  }
  std::vector<double> out(n * f * ho * wo, 0.0);
  auto xv = x.data();
  auto wv = weight.data();
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t fo = 0; fo < f; ++fo) {
      double* y = out.data() + (b * f + fo) * ho * wo;
      if (bias.defined()) std::fill(y, y + ho * wo, bias.data()[fo]);
      for (int64_t ci = 0; ci < c; ++ci) {
        const double* xc = xv.data() + (b * c + ci) * h * w;
        const double* k = wv.data() + (ci * f + fo) * kh * kw;
        for (int64_t i = 0; i < h; ++i) {
          for (int64_t j = 0; j < w; ++j) {
            const double v = xc[i * w + j];
            for (int64_t a = 0; a < kh; ++a) {
              double* row = y + (i * stride + a) * wo + j * stride;
              for (int64_t bb = 0; bb < kw; ++bb) row[bb] += v * k[a * kw + bb];
            }
          }
        }
      }
    }
  }
  RecordFlops(FlopKind::kMac, 2ull * n * c * h * w * f * kh * kw);
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::MakeResult(
      "transposed_conv2d", {n, f, ho, wo}, std::move(out), std::move(inputs),
      [x, weight, n, c, h, w, f, kh, kw, ho, wo, stride](
          std::span<const double> go, Grads grads) {
        auto xv = x.data();
        auto wv = weight.data();
        for (int64_t b = 0; b < n; ++b) {
          for (int64_t fo = 0; fo < f; ++fo) {
            const double* gy = go.data() + (b * f + fo) * ho * wo;
            if (grads.size() > 2 && grads[2]) {
              double s = 0;
              for (int64_t p = 0; p < ho * wo; ++p) s += gy[p];
              (*grads[2])[fo] += s;
            }
            for (int64_t ci = 0; ci < c; ++ci) {
              const double* xc = xv.data() + (b * c + ci) * h * w;
              const double* k = wv.data() + (ci * f + fo) * kh * kw;
              for (int64_t i = 0; i < h; ++i) {
                for (int64_t j = 0; j < w; ++j) {
                  double gxv = 0;
                  for (int64_t a = 0; a < kh; ++a) {
                    const double* row = gy + (i * stride + a) * wo + j * stride;
                    for (int64_t bb = 0; bb < kw; ++bb) {
                      gxv += row[bb] * k[a * kw + bb];
                      if (grads[1]) {
                        (*grads[1])[((ci * f + fo) * kh + a) * kw + bb] +=
                            row[bb] * xc[i * w + j];
                      }
                    }
                  }
                  if (grads[0]) (*grads[0])[((b * c + ci) * h + i) * w + j] += gxv;
                }
              }
            }
          }
        }
      });
}

Tensor DepthwiseConv2dNhwc(const Tensor& x, const Tensor& weight,
                           const Tensor& bias, int64_t padding) {
  Require(x.rank() == 4 && weight.rank() == 3, Error::Code::kShape,
          "depthwise conv expects [B,H,W,C] input and [kh,kw,C] weight");
  const int64_t nb = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int64_t kh = weight.dim(0), kw = weight.dim(1);
  if (weight.dim(2) != c) {
    Fail(Error::Code::kShape, "depthwise weight " +
                                  ShapeToString(weight.shape()) +
                                  " does not match input " +
                                  ShapeToString(x.shape()));
  }
  Require(padding >= 0, Error::Code::kInvalidArgument, "negative padding");
  const int64_t ho = h + 2 * padding - kh + 1;
  const int64_t wo = w + 2 * padding - kw + 1;
  Require(ho >= 1 && wo >= 1, Error::Code::kShape,
          "depthwise kernel larger than padded input");
  if (bias.defined()) {
    Require(bias.numel() == c, Error::Code::kShape, "depthwise bias mismatch");
  }
  std::vector<double> out(nb * ho * wo * c, 0.0);
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  const double* bv = bias.defined() ? bias.data().data() : nullptr;
  for (int64_t b = 0; b < nb; ++b) {
    for (int64_t i = 0; i < ho; ++i) {
      for (int64_t j = 0; j < wo; ++j) {
        double* y = out.data() + ((b * ho + i) * wo + j) * c;
        if (bv) std::copy(bv, bv + c, y);
        for (int64_t a = 0; a < kh; ++a) {
          const int64_t iy = i - padding + a;
          if (iy < 0 || iy >= h) continue;
          for (int64_t bb = 0; bb < kw; ++bb) {
            const int64_t ix = j - padding + bb;
            if (ix < 0 || ix >= w) continue;
            const double* xs = xv + ((b * h + iy) * w + ix) * c;
            const double* ks = wv + (a * kw + bb) * c;
            for (int64_t ch = 0; ch < c; ++ch) y[ch] += ks[ch] * xs[ch];
          }
        }
      }
    }
  }
  RecordFlops(FlopKind::kMac, 2ull * nb * ho * wo * c * kh * kw);
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::MakeResult(
      "depthwise_conv2d", {nb, ho, wo, c}, std::move(out), std::move(inputs),
      [x, weight, nb, h, w, c, kh, kw, ho, wo, padding](
          std::span<const double> go, Grads grads) {
        const double* xv = x.data().data();
        const double* wv = weight.data().data();
        double* gx = grads[0] ? grads[0]->data() : nullptr;
        double* gw = grads[1] ? grads[1]->data() : nullptr;
        double* gb = grads.size() > 2 && grads[2] ? grads[2]->data() : nullptr;
        for (int64_t b = 0; b < nb; ++b) {
          for (int64_t i = 0; i < ho; ++i) {
            for (int64_t j = 0; j < wo; ++j) {
              const double* gy = go.data() + ((b * ho + i) * wo + j) * c;
              if (gb) {
                for (int64_t ch = 0; ch < c; ++ch) gb[ch] += gy[ch];
              }
              for (int64_t a = 0; a < kh; ++a) {
                const int64_t iy = i - padding + a;
                if (iy < 0 || iy >= h) continue;
                for (int64_t bb = 0; bb < kw; ++bb) {
                  const int64_t ix = j - padding + bb;
                  if (ix < 0 || ix >= w) continue;
                  const int64_t xoff = ((b * h + iy) * w + ix) * c;
                  const int64_t koff = (a * kw + bb) * c;
                  if (gx) {
                    for (int64_t ch = 0; ch < c; ++ch) gx[xoff + ch] += gy[ch] * wv[koff + ch];
                  }
                  if (gw) {
                    for (int64_t ch = 0; ch < c; ++ch) gw[koff + ch] += gy[ch] * xv[xoff + ch];
                  }
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

// Saved for the backward pass of the normalization ops.
struct NormStats {
  std::vector<double> xhat;
  std::vector<double> inv_std;
};

}  // namespace

Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps) {
  Require(eps > 0, Error::Code::kInvalidArgument, "norm eps must be positive");
  const int64_t c = x.dim(-1);
  Require(gamma.numel() == c && beta.numel() == c, Error::Code::kShape,
          "layer norm affine extent mismatch");
  const int64_t rows = x.numel() / c;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  auto stats = std::make_shared<NormStats>();
  stats->xhat.resize(x.numel());
  stats->inv_std.resize(rows);
  std::vector<double> out(x.numel());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * c;
    double mean = 0;
    for (int64_t k = 0; k < c; ++k) mean += xr[k];
    mean /= static_cast<double>(c);
    double var = 0;
    for (int64_t k = 0; k < c; ++k) var += (xr[k] - mean) * (xr[k] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    stats->inv_std[r] = inv;
    double* xh = stats->xhat.data() + r * c;
    double* y = out.data() + r * c;
    for (int64_t k = 0; k < c; ++k) {
      xh[k] = (xr[k] - mean) * inv;
      y[k] = xh[k] * gv[k] + bv[k];
    }
  }
  RecordFlops(FlopKind::kPointwise, 5ull * x.numel());
  return Tensor::MakeResult(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [stats, gamma, rows, c](std::span<const double> g, Grads grads) {
        auto gv = gamma.data();
        std::vector<double> gxh(c);
        for (int64_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * c;
          const double* xh = stats->xhat.data() + r * c;
          if (grads[1]) {
            for (int64_t k = 0; k < c; ++k) (*grads[1])[k] += gr[k] * xh[k];
          }
          if (grads[2]) {
            for (int64_t k = 0; k < c; ++k) (*grads[2])[k] += gr[k];
          }
          if (grads[0]) {
            double mean_g = 0, mean_gx = 0;
            for (int64_t k = 0; k < c; ++k) {
              gxh[k] = gr[k] * gv[k];
              mean_g += gxh[k];
              mean_gx += gxh[k] * xh[k];
            }
            mean_g /= static_cast<double>(c);
            mean_gx /= static_cast<double>(c);
            double* gx = grads[0]->data() + r * c;
            const double inv = stats->inv_std[r];
            for (int64_t k = 0; k < c; ++k) {
              gx[k] += inv * (gxh[k] - mean_g - xh[k] * mean_gx);
            }
          }
        }
      });
}

Tensor BatchNorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor* running_mean, Tensor* running_var, bool training,
                   double momentum, double eps) {
  Require(eps > 0, Error::Code::kInvalidArgument, "norm eps must be positive");
  Require(x.rank() >= 2, Error::Code::kShape, "batch norm needs [N, C, ...]");
  const int64_t n = x.dim(0);
  const int64_t c = x.dim(1);
  const int64_t spatial = x.numel() / (n * c);
  Require(gamma.numel() == c && beta.numel() == c, Error::Code::kShape,
          "batch norm affine extent mismatch");
  const int64_t count = n * spatial;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (int64_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * spatial;
        for (int64_t i = 0; i < spatial; ++i) s += p[i];
      }
      mean[ch] = s / static_cast<double>(count);
      double v = 0;
      for (int64_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * spatial;
        for (int64_t i = 0; i < spatial; ++i) v += (p[i] - mean[ch]) * (p[i] - mean[ch]);
      }
      var[ch] = v / static_cast<double>(count);
    }
    if (running_mean && running_var) {
      auto rm = running_mean->mutable_data();
      auto rv = running_var->mutable_data();
      const double unbias =
          count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mean[ch];
        rv[ch] = (1.0 - momentum) * rv[ch] + momentum * var[ch] * unbias;
      }
    }
  } else {
    Require(running_mean && running_var, Error::Code::kInvalidArgument,
            "batch norm eval mode needs running statistics");
    auto rm = running_mean->data();
    auto rv = running_var->data();
    std::copy(rm.begin(), rm.end(), mean.begin());
    std::copy(rv.begin(), rv.end(), var.begin());
  }
  auto stats = std::make_shared<NormStats>();
  stats->inv_std.resize(c);
  stats->xhat.resize(x.numel());
  std::vector<double> out(x.numel());
  for (int64_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(var[ch] + eps);
    stats->inv_std[ch] = inv;
    for (int64_t b = 0; b < n; ++b) {
      const int64_t off = (b * c + ch) * spatial;
      for (int64_t i = 0; i < spatial; ++i) {
        const double xh = (xv[off + i] - mean[ch]) * inv;
        stats->xhat[off + i] = xh;
        out[off + i] = xh * gv[ch] + bv[ch];
      }
    }
  }
  RecordFlops(FlopKind::kPointwise, 5ull * x.numel());
  return Tensor::MakeResult(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [stats, gamma, n, c, spatial, count, training](std::span<const double> g,
                                                     Grads grads) {
        auto gv = gamma.data();
        for (int64_t ch = 0; ch < c; ++ch) {
          double sum_g = 0, sum_gx = 0;
          for (int64_t b = 0; b < n; ++b) {
            const int64_t off = (b * c + ch) * spatial;
            for (int64_t i = 0; i < spatial; ++i) {
              sum_g += g[off + i];
              sum_gx += g[off + i] * stats->xhat[off + i];
            }
          }
          if (grads[1]) (*grads[1])[ch] += sum_gx;
          if (grads[2]) (*grads[2])[ch] += sum_g;
          if (!grads[0]) continue;
          const double scale = gv[ch] * stats->inv_std[ch];
          const double mean_g = sum_g / static_cast<double>(count);
          const double mean_gx = sum_gx / static_cast<double>(count);
          for (int64_t b = 0; b < n; ++b) {
            const int64_t off = (b * c + ch) * spatial;
            double* gx = grads[0]->data() + off;
            for (int64_t i = 0; i < spatial; ++i) {
              if (training) {
                gx[i] += scale * (g[off + i] - mean_g - stats->xhat[off + i] * mean_gx);
              } else {
                gx[i] += scale * g[off + i];
              }
            }
          }
        }
      });
}

Tensor Norm(const Tensor& x, NormKind kind, const Tensor& gamma,
            const Tensor& beta, double eps) {
  if (kind == NormKind::kLayer) return LayerNorm(x, gamma, beta, eps);
  return BatchNorm2d(x, gamma, beta, nullptr, nullptr, true, 0.0, eps);
}

// ---------------------------------------------------------------------------
// Activations

Tensor Gelu(const Tensor& x) {
  return Unary(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + v * pdf;
      },
      FlopKind::kPointwise);
}

Tensor Silu(const Tensor& x) {
  return Unary(
      "silu", x, [](double v) { return v * StableSigmoid(v); },
      [](double v, double) {
        const double s = StableSigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      },
      FlopKind::kPointwise);
}

Tensor Softplus(const Tensor& x) {
  return Unary(
      "softplus", x,
      [](double v) {
        return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
      },
      [](double v, double) { return StableSigmoid(v); }, FlopKind::kPointwise);
}

Tensor Sigmoid(const Tensor& x) {
  return Unary<true>(
      "sigmoid", x, [](double v) { return StableSigmoid(v); },
      [](double, double y) { return y * (1.0 - y); }, FlopKind::kPointwise);
}

Tensor Activation(ActivationKind kind, const Tensor& x) {
  switch (kind) {
    case ActivationKind::kGelu:
      return Gelu(x);
    case ActivationKind::kSilu:
      return Silu(x);
    case ActivationKind::kSoftplus:
      return Softplus(x);
    case ActivationKind::kSigmoid:
      return Sigmoid(x);
  }
  Fail(Error::Code::kInvalidArgument, "unknown activation");
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

struct Tap {
  int64_t i0, i1;
  double w0, w1;
};

std::vector<Tap> BilinearTaps(int64_t in, int64_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int64_t i0 = static_cast<int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int64_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

Tensor BilinearInterpolate(const Tensor& x, int64_t out_h, int64_t out_w) {
  Require(x.rank() == 4, Error::Code::kShape, "interpolate expects NCHW");
  Require(out_h > 0 && out_w > 0, Error::Code::kShape,
          "interpolate target must be positive");
  const int64_t planes = x.dim(0) * x.dim(1);
  const int64_t h = x.dim(2), w = x.dim(3);
  const std::vector<Tap> ty = BilinearTaps(h, out_h);
  const std::vector<Tap> tx = BilinearTaps(w, out_w);
  std::vector<double> out(planes * out_h * out_w);
  auto xv = x.data();
  for (int64_t p = 0; p < planes; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * out_h * out_w;
    for (int64_t i = 0; i < out_h; ++i) {
      const Tap& a = ty[i];
      for (int64_t j = 0; j < out_w; ++j) {
        const Tap& b = tx[j];
        dst[i * out_w + j] = a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1]) +
                             a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]);
      }
    }
  }
  RecordFlops(FlopKind::kPointwise, 5ull * planes * out_h * out_w);
  return Tensor::MakeResult(
      "bilinear_interpolate", {x.dim(0), x.dim(1), out_h, out_w},
      std::move(out), {x},
      [ty, tx, planes, h, w, out_h, out_w](std::span<const double> g, Grads grads) {
        auto& gx = *grads[0];
        for (int64_t p = 0; p < planes; ++p) {
          double* dst = gx.data() + p * h * w;
          const double* src = g.data() + p * out_h * out_w;
          for (int64_t i = 0; i < out_h; ++i) {
            const Tap& a = ty[i];
            for (int64_t j = 0; j < out_w; ++j) {
              const Tap& b = tx[j];
              const double v = src[i * out_w + j];
              dst[a.i0 * w + b.i0] += v * a.w0 * b.w0;
              dst[a.i0 * w + b.i1] += v * a.w0 * b.w1;
              dst[a.i1 * w + b.i0] += v * a.w1 * b.w0;
              dst[a.i1 * w + b.i1] += v * a.w1 * b.w1;
            }
          }
        }
      });
}

}  // namespace mim
