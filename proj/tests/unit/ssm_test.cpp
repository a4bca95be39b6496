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

#include <cmath>

#include "ssm/ssm.h"
#include "tensor/flop_counter.h"
#include "test_util.h"

namespace mim::ssm {
namespace {

using testing::RandomTensor;

// Explicit per-step state update, written independently of the library scan.
std::vector<double> DenseRecurrence(int64_t l_dim, int64_t e_dim, int64_t n_dim,
                                    std::span<const double> u,
                                    std::span<const double> a_bar,
                                    std::span<const double> b_bar,
                                    std::span<const double> c,
                                    std::span<const double> d) {
  std::vector<double> y(l_dim * e_dim);
  for (int64_t e = 0; e < e_dim; ++e) {
    std::vector<double> h(n_dim, 0.0);
    for (int64_t l = 0; l < l_dim; ++l) {
      double out = d[e] * u[l * e_dim + e];
      for (int64_t n = 0; n < n_dim; ++n) {
        const int64_t k = (l * e_dim + e) * n_dim + n;
        h[n] = a_bar[k] * h[n] + b_bar[k] * u[l * e_dim + e];
        out += c[l * n_dim + n] * h[n];
      }
      y[l * e_dim + e] = out;
    }
  }
  return y;
}

TEST_CASE("discretize examples") {
  Tensor a = Tensor::FromData({1, 1}, {-1.0});
  Tensor b = Tensor::FromData({1, 1}, {1.0});
  DiscretizedPair half = Discretize(Tensor::FromData({1, 1}, {std::log(2.0)}), a, b);
  CHECK(half.a_bar.item() == doctest::Approx(0.5).epsilon(1e-15));

  DiscretizedPair tenth = Discretize(Tensor::FromData({1, 1}, {0.1}), a, b);
  CHECK(tenth.b_bar.item() == doctest::Approx(0.1).epsilon(1e-15));

  DiscretizedPair zero = Discretize(Tensor::FromData({1, 1}, {0.0}), a, b, true);
  CHECK(zero.a_bar.item() == 1.0);
  CHECK(zero.b_bar.item() == 0.0);

  CHECK_THROWS_AS(Discretize(Tensor::FromData({1, 1}, {0.0}), a, b), Error);
  CHECK_THROWS_AS(Discretize(Tensor::FromData({1, 1}, {-0.2}), a, b), Error);
}

TEST_CASE("discretized coefficients lie strictly inside (0, 1)") {
  Rng rng(11);
  Tensor delta = RandomTensor({8, 3}, rng, 1e-3, 2.0, false);
  Tensor a = RandomTensor({3, 5}, rng, -4.0, -0.1, false);
  Tensor b = RandomTensor({8, 5}, rng, -1, 1, false);
  DiscretizedPair pair = Discretize(delta, a, b);
  for (double v : pair.a_bar.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("selective scan examples") {
  Tensor one = Tensor::Full({1}, 1.0);
  {
    Tensor u = Tensor::FromData({3, 1}, {1, 1, 1});
    Tensor y = SelectiveScan(u, Tensor::Full({3, 1, 1}, 1.0), Tensor::Full({3, 1, 1}, 0.1),
                             Tensor::Full({3, 1}, 1.0), Tensor::Zeros({1}));
    CHECK(y.data()[0] == doctest::Approx(0.1));
    CHECK(y.data()[1] == doctest::Approx(0.2));
    CHECK(y.data()[2] == doctest::Approx(0.3));
  }
  {
    Tensor y = SelectiveScan(Tensor::FromData({1, 1}, {3}), Tensor::Zeros({1, 1, 1}),
                             Tensor::Zeros({1, 1, 1}), Tensor::Full({1, 1}, 1.0),
                             Tensor::Full({1}, 2.0));
    CHECK(y.item() == 6.0);
  }
  {
    Tensor y = SelectiveScan(Tensor::FromData({2, 1}, {1, 0}), Tensor::Full({2, 1, 1}, 0.5),
                             Tensor::Full({2, 1, 1}, 1.0), Tensor::Full({2, 1}, 1.0),
                             Tensor::Zeros({1}));
    CHECK(y.data()[0] == 1.0);
    CHECK(y.data()[1] == 0.5);
  }
  CHECK_THROWS_AS(SelectiveScan(Tensor::Zeros({3, 1}), Tensor::Zeros({2, 1, 1}),
                                Tensor::Zeros({2, 1, 1}), Tensor::Zeros({3, 1}), one),
                  Error);
}

TEST_CASE("selective scan matches the dense recurrence oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    const int64_t l = 1 + rng.Below(32), e = 1 + rng.Below(4), n = 1 + rng.Below(16);
    CAPTURE(trial);
    Tensor u = RandomTensor({l, e}, rng, -2, 2, false);
    Tensor a_bar = RandomTensor({l, e, n}, rng, 0, 1, false);
    Tensor b_bar = RandomTensor({l, e, n}, rng, -1, 1, false);
    Tensor c = RandomTensor({l, n}, rng, -1, 1, false);
    Tensor d = RandomTensor({e}, rng, -1, 1, false);
    Tensor y = SelectiveScan(u, a_bar, b_bar, c, d);
    std::vector<double> ref =
        DenseRecurrence(l, e, n, u.data(), a_bar.data(), b_bar.data(), c.data(), d.data());
    CHECK(testing::MaxAbsDiff(y.data(), ref) <= 1e-10);

    // Fused path against the same oracle.
    Tensor delta = RandomTensor({l, e}, rng, 0.01, 1.0, false);
    Tensor a = RandomTensor({e, n}, rng, -3, -0.1, false);
    Tensor b = RandomTensor({l, n}, rng, -1, 1, false);
    DiscretizedPair pair = Discretize(delta, a, b);
    Tensor fused = FusedSelectiveScan(u, delta, a, b, c, d);
    std::vector<double> ref2 = DenseRecurrence(l, e, n, u.data(), pair.a_bar.data(),
                                               pair.b_bar.data(), c.data(), d.data());
    CHECK(testing::MaxAbsDiff(fused.data(), ref2) <= 1e-10);
  }
}

TEST_CASE("batched scan equals independent per-sequence scans") {
  Rng rng(13);
  const int64_t bsz = 3, l = 7, e = 2, n = 4;
  Tensor u = RandomTensor({bsz, l, e}, rng, -1, 1, false);
  Tensor delta = RandomTensor({bsz, l, e}, rng, 0.05, 0.5, false);
  Tensor a = RandomTensor({e, n}, rng, -2, -0.5, false);
  Tensor b = RandomTensor({bsz, l, n}, rng, -1, 1, false);
  Tensor c = RandomTensor({bsz, l, n}, rng, -1, 1, false);
  Tensor d = RandomTensor({e}, rng, -1, 1, false);
  Tensor y = FusedSelectiveScan(u, delta, a, b, c, d);
  for (int64_t i = 0; i < bsz; ++i) {
    Tensor yi = FusedSelectiveScan(Slice(u, 0, i, 1), Slice(delta, 0, i, 1), a,
                                   Slice(b, 0, i, 1), Slice(c, 0, i, 1), d);
    CHECK(testing::BitwiseEqual(yi.data(), y.data().subspan(i * l * e, l * e)));
  }
}

TEST_CASE("scan gradients pass finite differences") {
  Rng rng(14);
  const int64_t l = 6, e = 3, n = 4;
  Tensor u = RandomTensor({2, l, e}, rng);
  Tensor a_bar = RandomTensor({2, l, e, n}, rng, 0.1, 0.9);
  Tensor b_bar = RandomTensor({2, l, e, n}, rng);
  Tensor c = RandomTensor({2, l, n}, rng);
  Tensor d = RandomTensor({e}, rng);
  CHECK(testing::CheckOp([&] { return SelectiveScan(u, a_bar, b_bar, c, d); },
                         {{"u", u}, {"a_bar", a_bar}, {"b_bar", b_bar}, {"c", c}, {"d", d}})
            .passed);

  Tensor delta = RandomTensor({2, l, e}, rng, 0.05, 0.8);
  Tensor a = RandomTensor({e, n}, rng, -2, -0.2);
  Tensor b = RandomTensor({2, l, n}, rng);
  CHECK(testing::CheckOp([&] { return FusedSelectiveScan(u, delta, a, b, c, d); },
                         {{"u", u}, {"delta", delta}, {"a", a}, {"b", b}, {"c", c}, {"d", d}})
            .passed);
  CHECK(testing::CheckOp(
            [&] {
              DiscretizedPair p = Discretize(delta, a, b);
              return Add(p.a_bar, p.b_bar);
            },
            {{"delta", delta}, {"a", a}, {"b", b}})
            .passed);
}

TEST_CASE("fused and composed scans agree in value and gradient") {
  Rng rng(15);
  const int64_t l = 9, e = 3, n = 5;
  Tensor u = RandomTensor({l, e}, rng);
  Tensor delta = RandomTensor({l, e}, rng, 0.05, 0.8);
  Tensor a = RandomTensor({e, n}, rng, -2, -0.2);
  Tensor b = RandomTensor({l, n}, rng);
  Tensor c = RandomTensor({l, n}, rng);
  Tensor d = RandomTensor({e}, rng);
  std::vector<Tensor> params = {u, delta, a, b, c, d};

  auto grads = [&](bool fused) {
    for (Tensor& p : params) p.zero_grad();
    Tensor y;
    if (fused) {
      y = FusedSelectiveScan(u, delta, a, b, c, d);
    } else {
      DiscretizedPair pair = Discretize(delta, a, b);
      y = SelectiveScan(u, pair.a_bar, pair.b_bar, c, d);
    }
    std::vector<double> values(y.data().begin(), y.data().end());
    Backward(testing::WeightedSum(y));
    std::vector<std::vector<double>> out = {values};
    for (Tensor& p : params) out.emplace_back(p.grad().begin(), p.grad().end());
    return out;
  };
  auto fused = grads(true);
  auto composed = grads(false);
  for (size_t i = 0; i < fused.size(); ++i) {
    CAPTURE(i);
    CHECK(testing::MaxAbsDiff(fused[i], composed[i]) < 1e-12);
  }
}

TEST_CASE("s6 is causal") {
  Rng rng(16);
  const int64_t l = 8, e = 4;
  SsmParams params = InitSsmParams(e, 6, rng);
  Tensor x = RandomTensor({l, e}, rng);
  Tensor y = S6Forward(x, params);
  // Gradient of y_k with respect to every x_j.
  for (int64_t k = 0; k < l; ++k) {
    x.zero_grad();
    Tensor yk = S6Forward(x, params);
    Backward(Sum(Slice(yk, 0, k, 1)));
    for (int64_t j = k + 1; j < l; ++j) {
      for (int64_t ch = 0; ch < e; ++ch) CHECK(x.grad()[j * e + ch] == 0.0);
    }
    double past = 0;
    for (int64_t ch = 0; ch < e; ++ch) past += std::abs(x.grad()[ch]);
    CHECK(past > 0.0);
  }

  // Forward differencing: x_0 reaches y_L, x_L never reaches y_0.
  Tensor x0 = x.detach();
  x0.mutable_data()[0] += 0.5;
  Tensor y0 = S6Forward(x0, params);
  CHECK(y0.data()[(l - 1) * e] != y.data()[(l - 1) * e]);
  Tensor xl = x.detach();
  xl.mutable_data()[(l - 1) * e] += 0.5;
  Tensor yl = S6Forward(xl, params);
  for (int64_t ch = 0; ch < e; ++ch) CHECK(yl.data()[ch] == y.data()[ch]);
}

TEST_CASE("s6 single step has no history term") {
  Rng rng(17);
  const int64_t e = 3, n = 4;
  SsmParams params = InitSsmParams(e, n, rng);
  params.x_proj = RandomTensor({2 * n + e, e}, rng, -0.5, 0.5, false);
  Tensor x = RandomTensor({1, e}, rng, -1, 1, false);
  Tensor y = S6Forward(x, params);
  // Hand composition of the projection and one recurrence step.
  const auto w = params.x_proj.data();
  std::vector<double> proj(2 * n + e, 0.0);
  for (int64_t r = 0; r < 2 * n + e; ++r) {
    for (int64_t k = 0; k < e; ++k) proj[r] += w[r * e + k] * x.data()[k];
  }
  for (int64_t ch = 0; ch < e; ++ch) {
    const double z = proj[2 * n + ch] + params.dt_bias.data()[ch];
    const double delta = std::log1p(std::exp(z));
    double expect = params.d_skip.data()[ch] * x.data()[ch];
    for (int64_t s = 0; s < n; ++s) expect += proj[n + s] * delta * proj[s] * x.data()[ch];
    CHECK(y.data()[ch] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("s6 large-delta limit passes the input through the skip") {
  Rng rng(18);
  const int64_t e = 4, n = 16;
  SsmParams params = InitSsmParams(e, n, rng);
  params.x_proj = Tensor::Zeros({2 * n + e, e});
  params.dt_bias = Tensor::Full({e}, 40.0);
  Tensor x = RandomTensor({12, e}, rng, -1, 1, false);
  CHECK(testing::MaxAbsDiff(S6Forward(x, params).data(), x.data()) < 1e-12);
}

TEST_CASE("s6 initialization follows the documented scheme") {
  Rng rng(19);
  const int64_t e = 6;
  SsmParams params = InitSsmParams(e, kDefaultStateDim, rng);
  CHECK(params.a_log.shape() == Shape{e, kDefaultStateDim});
  CHECK(params.x_proj.shape() == Shape{2 * kDefaultStateDim + e, e});
  for (int64_t ch = 0; ch < e; ++ch) {
    for (int64_t s = 0; s < kDefaultStateDim; ++s) {
      CHECK(-std::exp(params.a_log.data()[ch * kDefaultStateDim + s]) ==
            doctest::Approx(-(s + 1.0)));
    }
    CHECK(params.d_skip.data()[ch] == 1.0);
    const double delta = std::log1p(std::exp(params.dt_bias.data()[ch]));
    CHECK(delta >= 1e-3 * (1 - 1e-9));
    CHECK(delta <= 1e-1 * (1 + 1e-9));
  }
}

TEST_CASE("s6 gradient passes grad_check") {
  Rng rng(20);
  SsmParams params = InitSsmParams(4, 5, rng);
  params.x_proj = RandomTensor({14, 4}, rng, -0.5, 0.5);
  params.dt_bias = RandomTensor({4}, rng, -1, 0.5);
  params.a_log.set_requires_grad(true);
  params.d_skip.set_requires_grad(true);
  Tensor x = RandomTensor({2, 7, 4}, rng);
  std::vector<NamedTensor> named = {{"x", x}};
  params.AppendNamed("s6", named);
  CHECK(testing::CheckOp([&] { return S6Forward(x, params); }, named).passed);
}

TEST_CASE("hidden state stays bounded over long sequences") {
  Rng rng(21);
  const int64_t l = 10000, e = 2, n = 16;
  Tensor u = RandomTensor({l, e}, rng, -1, 1, false);
  Tensor delta = RandomTensor({l, e}, rng, 1e-3, 1.0, false);
  std::vector<double> a_vals(e * n);
  for (int64_t i = 0; i < e * n; ++i) a_vals[i] = -(i % n + 1.0);
  Tensor a = Tensor::FromData({e, n}, a_vals);
  Tensor b = RandomTensor({l, n}, rng, -1, 1, false);
  Tensor c_one = Tensor::Full({l, n}, 1.0);
  // With C = 1 the output is the state sum. |h_n| <= max|B dt u| / (1 - a_bar),
  // and dt/(1 - exp(-dt k)) <= 1/k + dt with dt <= 1.
  Tensor y = FusedSelectiveScan(u, delta, a, b, c_one, Tensor::Zeros({e}));
  double bound = 0;
  for (int64_t s = 1; s <= n; ++s) bound += 1.0 / s + 1.0;
  for (double v : y.data()) {
    REQUIRE(std::isfinite(v));
    CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("fused scan records the core FLOP count") {
  FlopCounter counter;
  const int64_t l = 5, e = 3, n = 4;
  {
    FlopCounterScope active(&counter);
    FusedSelectiveScan(Tensor::Zeros({2, l, e}), Tensor::Full({2, l, e}, 0.1),
                       Tensor::Full({e, n}, -1.0), Tensor::Zeros({2, l, n}),
                       Tensor::Zeros({2, l, n}), Tensor::Zeros({e}));
  }
  CHECK(counter.Total() == 4 * 2 * l * e * n);
}

TEST_CASE("scan rejects inconsistent shapes") {
  CHECK_THROWS_AS(FusedSelectiveScan(Tensor::Zeros({3, 2}), Tensor::Full({3, 2}, 0.1),
                                     Tensor::Full({2, 4}, -1.0), Tensor::Zeros({3, 4}),
                                     Tensor::Zeros({2, 4}), Tensor::Zeros({2})),
                  Error);
  CHECK_THROWS_AS(FusedSelectiveScan(Tensor::Zeros({3, 2}), Tensor::Full({3, 2}, -0.1),
                                     Tensor::Full({2, 4}, -1.0), Tensor::Zeros({3, 4}),
                                     Tensor::Zeros({3, 4}), Tensor::Zeros({2})),
                  Error);
  Rng rng(22);
  SsmParams params = InitSsmParams(3, 4, rng);
  CHECK_THROWS_AS(S6Forward(Tensor::Zeros({5, 2}), params), Error);
}

}  // namespace
}  // namespace mim::ssm
