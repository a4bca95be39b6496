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
#include <filesystem>
#include <fstream>

#include "tensor/checkpoint.h"
#include "tensor/flop_counter.h"
#include "test_util.h"

namespace mim {
namespace {

using testing::CheckOp;
using testing::RandomTensor;

TEST_CASE("conv2d identity kernel returns the input") {
  Rng rng(1);
  Tensor x = RandomTensor({1, 1, 5, 6}, rng);
  Tensor w = Tensor::Full({1, 1, 1, 1}, 1.0);
  Tensor y = Conv2d(x, w, {}, 1, 0);
  CHECK(y.shape() == x.shape());
  CHECK(testing::BitwiseEqual(y.data(), x.data()));
}

TEST_CASE("conv2d all-ones 3x3 on a constant field gives 9c inside") {
  const double c = 0.7;
  Tensor x = Tensor::Full({1, 1, 6, 6}, c);
  Tensor w = Tensor::Full({1, 1, 3, 3}, 1.0);
  Tensor y = Conv2d(x, w, {}, 1, 1);
  REQUIRE(y.shape() == Shape{1, 1, 6, 6});
  for (int i = 1; i < 5; ++i) {
    for (int j = 1; j < 5; ++j) CHECK(y.data()[i * 6 + j] == doctest::Approx(9 * c));
  }
  // Corners see a 2x2 window.
  CHECK(y.data()[0] == doctest::Approx(4 * c));
}

TEST_CASE("conv2d stride 2 pad 1 on 8x8 yields 4x4") {
  Tensor x = Tensor::Zeros({1, 1, 8, 8});
  Tensor w = Tensor::Zeros({1, 1, 3, 3});
  CHECK(Conv2d(x, w, {}, 2, 1).shape() == Shape{1, 1, 4, 4});
}

TEST_CASE("conv2d rejects mismatched shapes") {
  Tensor x = Tensor::Zeros({1, 3, 8, 8});
  CHECK_THROWS_AS(Conv2d(x, Tensor::Zeros({2, 2, 3, 3}), {}, 1, 1), Error);
  CHECK_THROWS_AS(Conv2d(x, Tensor::Zeros({2, 3, 3, 3}), {}, 1, 1, 2), Error);
  CHECK_THROWS_AS(Conv2d(Tensor::Zeros({1, 1, 2, 2}), Tensor::Zeros({1, 1, 5, 5}), {}, 1, 0), Error);
}

TEST_CASE("transposed conv single tap expansion") {
  const double v = 1.25;
  Tensor x = Tensor::Full({1, 1, 1, 1}, v);
  Tensor w = Tensor::Full({1, 1, 2, 2}, 1.0);
  Tensor y = TransposedConv2d(x, w, {}, 2);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (double o : y.data()) CHECK(o == v);

  CHECK(TransposedConv2d(Tensor::Zeros({1, 1, 4, 4}), w, {}, 2).shape() ==
        Shape{1, 1, 8, 8});
  Tensor z = TransposedConv2d(Tensor::Zeros({2, 3, 3, 3}),
                              Tensor::Full({3, 2, 2, 2}, 0.5), {}, 2);
  for (double o : z.data()) CHECK(o == 0.0);
  CHECK_THROWS_AS(TransposedConv2d(x, w, {}, 0), Error);
  CHECK_THROWS_AS(TransposedConv2d(x, Tensor::Zeros({2, 1, 2, 2}), {}, 2), Error);
}

TEST_CASE("linear examples") {
  Tensor x = Tensor::FromData({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::FromData({2, 2}, {1, 0, 0, 1});
  CHECK(testing::BitwiseEqual(Linear(x, eye, Tensor::Zeros({2})).data(), x.data()));

  Tensor y = Linear(Tensor::FromData({1}, {3}), Tensor::FromData({1, 1}, {2}),
                    Tensor::FromData({1}, {1}));
  CHECK(y.item() == 7.0);

  CHECK(Linear(Tensor::Zeros({5, 4}), Tensor::Zeros({2, 4})).shape() == Shape{5, 2});
  CHECK_THROWS_AS(Linear(Tensor::Zeros({5, 3}), Tensor::Zeros({2, 4})), Error);
}

TEST_CASE("layer norm examples") {
  Tensor gamma = Tensor::Full({4}, 1.0);
  Tensor beta = Tensor::Zeros({4});
  Tensor y = LayerNorm(Tensor::Full({3, 4}, 2.5), gamma, beta, 1e-5);
  for (double v : y.data()) CHECK(v == 0.0);

  Tensor y2 = LayerNorm(Tensor::FromData({2}, {1, -1}), Tensor::Full({2}, 1.0),
                        Tensor::Zeros({2}), 1e-12);
  CHECK(y2.data()[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(y2.data()[1] == doctest::Approx(-1.0).epsilon(1e-9));

  Rng rng(3);
  Tensor x = RandomTensor({3, 4}, rng, -1, 1, false);
  Tensor shifted = AddScalar(x, 17.0);
  CHECK(testing::MaxAbsDiff(LayerNorm(x, gamma, beta, 1e-5).data(),
                            LayerNorm(shifted, gamma, beta, 1e-5).data()) < 1e-9);
  CHECK_THROWS_AS(LayerNorm(x, gamma, beta, 0.0), Error);
}

TEST_CASE("batch norm normalizes per channel and tracks running stats") {
  Rng rng(4);
  Tensor x = RandomTensor({3, 2, 4, 4}, rng, -2, 3, false);
  Tensor gamma = Tensor::Full({2}, 1.0);
  Tensor beta = Tensor::Zeros({2});
  Tensor rm = Tensor::Zeros({2});
  Tensor rv = Tensor::Full({2}, 1.0);
  Tensor y = BatchNorm2d(x, gamma, beta, &rm, &rv, true, 0.1, 1e-5);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, sq = 0;
    for (int n = 0; n < 3; ++n) {
      for (int i = 0; i < 16; ++i) {
        const double v = y.data()[(n * 2 + c) * 16 + i];
        mean += v;
        sq += v * v;
      }
    }
    CHECK(mean / 48 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sq / 48 == doctest::Approx(1.0).epsilon(1e-4));
  }
  // Momentum 0.1 moves the running mean a tenth of the way.
  double batch_mean = 0;
  for (int n = 0; n < 3; ++n) {
    for (int i = 0; i < 16; ++i) batch_mean += x.data()[(n * 2) * 16 + i];
  }
  CHECK(rm.data()[0] == doctest::Approx(0.1 * batch_mean / 48));

  Tensor eval = BatchNorm2d(x, gamma, beta, &rm, &rv, false, 0.1, 1e-5);
  CHECK(eval.data()[0] ==
        doctest::Approx((x.data()[0] - rm.data()[0]) / std::sqrt(rv.data()[0] + 1e-5)));

  Tensor constant = Norm(Tensor::Full({2, 2, 3, 3}, 4.0), NormKind::kBatch, gamma,
                         beta, 1e-5);
  for (double v : constant.data()) CHECK(v == 0.0);
}

TEST_CASE("activation examples") {
  Tensor zero = Tensor::Zeros({1});
  CHECK(Gelu(zero).item() == 0.0);
  CHECK(Silu(zero).item() == 0.0);
  CHECK(Sigmoid(zero).item() == 0.5);
  CHECK(Activation(ActivationKind::kSigmoid, zero).item() == 0.5);

  Rng rng(5);
  Tensor x = RandomTensor({64}, rng, -5, 5, false);
  Tensor sp = Softplus(x);
  for (int i = 0; i < 64; ++i) {
    CHECK(std::abs(sp.data()[i] - std::log(1 + std::exp(x.data()[i]))) < 1e-12);
  }
  // Exact (erf) GeLU, not the tanh approximation.
  Tensor one = Gelu(Tensor::Full({1}, 1.0));
  CHECK(one.item() == doctest::Approx(0.5 * (1 + std::erf(1 / std::sqrt(2.0)))).epsilon(1e-15));
}

TEST_CASE("backward examples") {
  Tensor x = Tensor::FromData({1}, {3.0}, true);
  Backward(Sum(Square(x)));
  CHECK(x.grad()[0] == 6.0);

  Tensor z = Tensor::FromData({1}, {0.0}, true);
  Backward(Sum(Gelu(z)));
  CHECK(z.grad()[0] == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(Backward(Tensor::Zeros({2}, true)), Error);
}

TEST_CASE("disconnected parameter gets no gradient contribution") {
  Tensor used = Tensor::FromData({2}, {1.0, 2.0}, true);
  Tensor unused = Tensor::FromData({2}, {1.0, 2.0}, true);
  Backward(Sum(used));
  for (double g : unused.grad()) CHECK(g == 0.0);
  CHECK(used.grad()[1] == 1.0);
}

TEST_CASE("composite linear-norm-activation chain matches central differences") {
  Rng rng(6);
  Tensor x = RandomTensor({3, 5}, rng);
  Tensor w = RandomTensor({4, 5}, rng);
  Tensor b = RandomTensor({4}, rng);
  Tensor gamma = RandomTensor({4}, rng, 0.5, 1.5);
  Tensor beta = RandomTensor({4}, rng);
  GradCheckOptions options;
  options.tolerance = 1e-6;
  auto report = GradCheck(
      [&] {
        return testing::WeightedSum(Gelu(LayerNorm(Linear(x, w, b), gamma, beta, 1e-5)));
      },
      {{"x", x}, {"w", w}, {"b", b}, {"gamma", gamma}, {"beta", beta}}, options);
  INFO(report.Summary());
  CHECK(report.passed);
}

TEST_CASE("grad_check identity has zero error and catches a corrupted gradient") {
  Tensor x = Tensor::FromData({3}, {0.5, -1.0, 2.0}, true);
  auto identity = GradCheck([&] { return Sum(x); }, {{"x", x}});
  CHECK(identity.passed);
  CHECK(identity.MaxRelError() < 1e-9);

  // Doubled backward on an otherwise correct square op.
  auto broken_square = [](const Tensor& t) {
    std::vector<double> out;
    for (double v : t.data()) out.push_back(v * v);
    return Tensor::MakeResult(
        "broken_square", t.shape(), out, {t},
        [t](std::span<const double> g, std::span<std::vector<double>* const> grads) {
          for (size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += 2.0 * (2.0 * t.data()[i]) * g[i];
        });
  };
  auto corrupted = GradCheck([&] { return Sum(broken_square(x)); }, {{"x", x}});
  CHECK_FALSE(corrupted.passed);
  CHECK(corrupted.MaxRelError() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("every op passes finite-difference checks on random shapes") {
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    const int64_t n = 1 + static_cast<int64_t>(rng.Below(2));
    const int64_t c = 1 + static_cast<int64_t>(rng.Below(3));
    const int64_t h = 3 + static_cast<int64_t>(rng.Below(3));
    const int64_t w = 3 + static_cast<int64_t>(rng.Below(3));
    CAPTURE(trial);

    Tensor a = RandomTensor({n, c, h, w}, rng);
    Tensor b = RandomTensor({n, c, h, w}, rng, 0.5, 2.0);
    Tensor bc = RandomTensor({w}, rng, 0.5, 2.0);
    Tensor pos = RandomTensor({n, c, h, w}, rng, 0.2, 2.0);

    CHECK(CheckOp([&] { return Add(a, bc); }, {{"a", a}, {"bc", bc}}).passed);
    CHECK(CheckOp([&] { return Sub(a, b); }, {{"a", a}, {"b", b}}).passed);
    CHECK(CheckOp([&] { return Mul(a, bc); }, {{"a", a}, {"bc", bc}}).passed);
    CHECK(CheckOp([&] { return Div(a, b); }, {{"a", a}, {"b", b}}).passed);
    Tensor col = RandomTensor({c, 1, 1}, rng, 0.5, 2.0);
    CHECK(CheckOp([&] { return Mul(a, col); }, {{"a", a}, {"col", col}}).passed);
    CHECK(CheckOp([&] { return Exp(a); }, {{"a", a}}).passed);
    CHECK(CheckOp([&] { return Log(pos); }, {{"pos", pos}}).passed);
    CHECK(CheckOp([&] { return Sqrt(pos); }, {{"pos", pos}}).passed);
    CHECK(CheckOp([&] { return Scale(Square(a), 0.3); }, {{"a", a}}).passed);
    CHECK(CheckOp([&] { return Sum(a, 2, true); }, {{"a", a}}).passed);
    CHECK(CheckOp([&] { return Mean(a, 1); }, {{"a", a}}).passed);
    CHECK(CheckOp([&] { return Mean(a); }, {{"a", a}}).passed);
    CHECK(CheckOp([&] { return Permute(a, {0, 2, 3, 1}); }, {{"a", a}}).passed);
    CHECK(CheckOp([&] { return Reshape(a, {n * c, -1}); }, {{"a", a}}).passed);
    CHECK(CheckOp([&] { return Concat({a, b}, 1); }, {{"a", a}, {"b", b}}).passed);
    CHECK(CheckOp([&] { return Slice(a, 3, 1, w - 1); }, {{"a", a}}).passed);
    CHECK(CheckOp([&] { return IndexSelect(a, 2, {h - 1, 0, 0}); }, {{"a", a}}).passed);

    Tensor mw = RandomTensor({w, 3}, rng);
    CHECK(CheckOp([&] { return MatMul(a, mw); }, {{"a", a}, {"mw", mw}}).passed);
    Tensor lw = RandomTensor({4, w}, rng);
    Tensor lb = RandomTensor({4}, rng);
    CHECK(CheckOp([&] { return Linear(a, lw, lb); }, {{"a", a}, {"lw", lw}, {"lb", lb}}).passed);

    Tensor k = RandomTensor({2, c, 3, 3}, rng);
    Tensor kb = RandomTensor({2}, rng);
    CHECK(CheckOp([&] { return Conv2d(a, k, kb, 1, 1); }, {{"a", a}, {"k", k}, {"kb", kb}}).passed);
    CHECK(CheckOp([&] { return Conv2d(a, k, kb, 2, 1); }, {{"a", a}, {"k", k}, {"kb", kb}}).passed);
    Tensor gk = RandomTensor({c, 1, 3, 3}, rng);
    CHECK(CheckOp([&] { return Conv2d(a, gk, {}, 1, 1, c); }, {{"a", a}, {"gk", gk}}).passed);
    Tensor tk = RandomTensor({c, 2, 2, 2}, rng);
    Tensor tb = RandomTensor({2}, rng);
    CHECK(CheckOp([&] { return TransposedConv2d(a, tk, tb, 2); }, {{"a", a}, {"tk", tk}, {"tb", tb}}).passed);
    Tensor nhwc = RandomTensor({n, h, w, c}, rng);
    Tensor dk = RandomTensor({3, 3, c}, rng);
    Tensor db = RandomTensor({c}, rng);
    CHECK(CheckOp([&] { return DepthwiseConv2dNhwc(nhwc, dk, db, 1); }, {{"x", nhwc}, {"dk", dk}, {"db", db}}).passed);

    Tensor gamma_w = RandomTensor({w}, rng, 0.5, 1.5);
    Tensor beta_w = RandomTensor({w}, rng);
    CHECK(CheckOp([&] { return LayerNorm(a, gamma_w, beta_w, 1e-5); },
                  {{"a", a}, {"gamma", gamma_w}, {"beta", beta_w}}).passed);
    Tensor gamma_c = RandomTensor({c}, rng, 0.5, 1.5);
    Tensor beta_c = RandomTensor({c}, rng);
    CHECK(CheckOp([&] { return Norm(a, NormKind::kBatch, gamma_c, beta_c, 1e-5); },
                  {{"a", a}, {"gamma", gamma_c}, {"beta", beta_c}}).passed);
    Tensor rm = Tensor::Zeros({c});
    Tensor rv = Tensor::Full({c}, 1.5);
    CHECK(CheckOp([&] { return BatchNorm2d(a, gamma_c, beta_c, &rm, &rv, false, 0.1, 1e-5); },
                  {{"a", a}, {"gamma", gamma_c}, {"beta", beta_c}}).passed);

    for (ActivationKind kind : {ActivationKind::kGelu, ActivationKind::kSilu,
                                ActivationKind::kSoftplus, ActivationKind::kSigmoid}) {
      CHECK(CheckOp([&] { return Activation(kind, a); }, {{"a", a}}).passed);
    }
    CHECK(CheckOp([&] { return BilinearInterpolate(a, 2 * h + 1, 3 * w); }, {{"a", a}}).passed);
  }
}

TEST_CASE("shape contracts hold across random valid shapes") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = 1 + rng.Below(3), c = 1 + rng.Below(4);
    const int64_t h = 1 + rng.Below(9), w = 1 + rng.Below(9);
    const int64_t k = 1 + rng.Below(3), stride = 1 + rng.Below(3), pad = rng.Below(2);
    Tensor x = Tensor::Zeros({n, c, h, w});
    if (h + 2 * pad >= k && w + 2 * pad >= k) {
      Tensor y = Conv2d(x, Tensor::Zeros({5, c, k, k}), {}, stride, pad);
      CHECK(y.shape() == Shape{n, 5, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1});
    }
    CHECK(TransposedConv2d(x, Tensor::Zeros({c, 2, k, k}), {}, stride).shape() ==
          Shape{n, 2, stride * (h - 1) + k, stride * (w - 1) + k});
    CHECK(Linear(x, Tensor::Zeros({3, w})).shape() == Shape{n, c, h, 3});
    CHECK(Permute(x, {3, 1, 0, 2}).shape() == Shape{w, c, n, h});
    CHECK(Sum(x, 1).shape() == Shape{n, h, w});
    CHECK(BilinearInterpolate(x, 2 * h, w + 1).shape() == Shape{n, c, 2 * h, w + 1});
    CHECK(Concat({x, x}, 3).shape() == Shape{n, c, h, 2 * w});
  }
}

TEST_CASE("forward passes are bitwise deterministic") {
  Rng rng(9);
  Tensor x = RandomTensor({2, 3, 6, 6}, rng, -1, 1, false);
  Tensor k = RandomTensor({4, 3, 3, 3}, rng, -1, 1, false);
  auto run = [&] { return Gelu(Conv2d(x, k, {}, 1, 1)); };
  CHECK(testing::BitwiseEqual(run().data(), run().data()));
}

TEST_CASE("non-finite outputs are reported") {
  SetFiniteChecks(true);
  Tensor big = Tensor::Full({1}, 1000.0);
  CHECK_THROWS_AS(Exp(big), Error);
  SetFiniteChecks(false);
  CHECK(std::isinf(Exp(big).item()));
  SetFiniteChecks(true);
  CHECK_THROWS_AS(Log(Tensor::Zeros({1})), Error);
}

TEST_CASE("single precision mode rounds op outputs") {
  Tensor x = Tensor::Full({1}, 0.1);
  {
    PrecisionGuard guard(Precision::kSingle);
    CHECK(Scale(x, 1.0).item() == static_cast<double>(0.1f));
  }
  CHECK(Scale(x, 1.0).item() == 0.1);
}

TEST_CASE("flop counter attributes work to scopes") {
  FlopCounter counter;
  {
    FlopCounterScope active(&counter);
    FlopScope outer("enc");
    Linear(Tensor::Zeros({3, 4}), Tensor::Zeros({5, 4}));
    {
      FlopScope inner("norm");
      Gelu(Tensor::Zeros({10}));
    }
  }
  CHECK(counter.TotalUnder("enc", FlopKind::kMac) == 2 * 3 * 4 * 5);
  CHECK(counter.TotalUnder("enc.norm") == 50);
  CHECK(counter.Total() == 120 + 50);
  // Nothing recorded once the scope is gone.
  Linear(Tensor::Zeros({3, 4}), Tensor::Zeros({5, 4}));
  CHECK(counter.Total() == 170);
}

TEST_CASE("checkpoint round trip and error paths") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mim_ckpt_test";
  fs::remove_all(dir);
  Rng rng(10);
  Checkpoint ck;
  ck.tensors = {{"a", RandomTensor({2, 3}, rng, -1, 1, false)},
                {"b.c", RandomTensor({4}, rng, -1, 1, false)}};
  ck.metadata = {{"note", "x"}};
  SaveCheckpoint(dir / "model", ck);
  Checkpoint back = LoadCheckpoint(dir / "model");
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].first == "a");
  CHECK(back.tensors[1].second.shape() == Shape{4});
  CHECK(testing::BitwiseEqual(back.tensors[0].second.data(), ck.tensors[0].second.data()));
  CHECK(back.metadata["note"] == "x");
  CHECK(fs::file_size(dir / "model.bin") == 10 * sizeof(double));

  std::vector<NamedTensor> dest = {{"a", Tensor::Zeros({2, 3})}};
  RestoreInto(back, dest);
  CHECK(testing::BitwiseEqual(dest[0].second.data(), ck.tensors[0].second.data()));
  std::vector<NamedTensor> wrong = {{"a", Tensor::Zeros({3, 2})}};
  CHECK_THROWS_AS(RestoreInto(back, wrong), Error);

  fs::resize_file(dir / "model.bin", 12);
  CHECK_THROWS_AS(LoadCheckpoint(dir / "model"), Error);
  CHECK_THROWS_AS(LoadCheckpoint(dir / "missing"), Error);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace mim
