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

#include "ssm/ssm.h"

#include <bit>
#include <cmath>

#include "tensor/flop_counter.h"
#include "tensor/ops.h"
#include "tensor/parallel.h"

namespace mim::ssm {

namespace {

using Grads = std::span<std::vector<double>* const>;

// Leading extents multiplied together; every scan input shares them.
int64_t LeadingCount(const Shape& shape, int64_t trailing_rank) {
  int64_t n = 1;
  for (size_t i = 0; i + trailing_rank < shape.size(); ++i) n *= shape[i];
  return n;
}

Shape Leading(const Shape& shape, int64_t trailing_rank) {
  return Shape(shape.begin(), shape.end() - trailing_rank);
}

// exp(x) for x <= 0 without branches, so loops over it vectorize. Cody-Waite
// reduction to |r| <= ln2/2 and a degree-13 Taylor polynomial; relative
// error stays within a few ulp. Results underflow to 0 below -708.
[[gnu::always_inline]] inline double ExpNonPositive(double x) {
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShifter = 6755399441055744.0;  // 1.5 * 2^52
  x = std::max(x, -708.0);
  const double shifted = x * kLog2e + kShifter;
  const double k = shifted - kShifter;
  const double r = (x - k * kLn2Hi) - k * kLn2Lo;
  double p = 1.0 / 6227020800.0;
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  // The low mantissa bits of shifted hold k; move it into the exponent.
  const int64_t ki = std::bit_cast<int64_t>(shifted) - std::bit_cast<int64_t>(kShifter);
  const double scale = std::bit_cast<double>((ki + 1023) << 52);
  return p * scale;
}

// One state row of a recurrence step, vectorized over channels:
// dec = exp(delta * a), h = dec * h + delta * u * b, acc += c * h.
inline void ScanRow(const double* __restrict delta, const double* __restrict du,
                    const double* __restrict a, double b, double c,
                    double* __restrict h, double* __restrict dec,
                    double* __restrict acc, int64_t e_dim) {
  for (int64_t e = 0; e < e_dim; ++e) dec[e] = ExpNonPositive(delta[e] * a[e]);
  for (int64_t e = 0; e < e_dim; ++e) {
    const double hn = dec[e] * h[e] + du[e] * b;
    h[e] = hn;
    acc[e] += c * hn;
  }
}

// Reverse of ScanRow. gh holds dL/dh for this state row and is carried to
// the previous step; td, tu gather per-channel sums over states; tb, tc are
// per-channel terms of dL/dB and dL/dC.
inline void ScanRowBackward(
    const double* __restrict g, const double* __restrict u,
    const double* __restrict delta, const double* __restrict a, double b,
    double c, const double* __restrict h, const double* __restrict hp,
    const double* __restrict dec, double* __restrict gh,
    double* __restrict ga, double* __restrict td, double* __restrict tu,
    double* __restrict tb, double* __restrict tc, int64_t e_dim) {
  for (int64_t e = 0; e < e_dim; ++e) {
    const double gs = gh[e] + g[e] * c;
    tc[e] = g[e] * h[e];
    const double g_decay = gs * hp[e] * dec[e];
    td[e] += g_decay * a[e] + gs * b * u[e];
    ga[e] += g_decay * delta[e];
    tb[e] = gs * delta[e] * u[e];
    tu[e] += gs * b;
    gh[e] = gs * dec[e];
  }
}

// Four-lane sum with a fixed order.
inline double Sum4(const double* a, int64_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i];
    s1 += a[i + 1];
    s2 += a[i + 2];
    s3 += a[i + 3];
  }
  for (; i < n; ++i) s0 += a[i];
  return (s0 + s1) + (s2 + s3);
}

void CheckScanShapes(const Tensor& u, const Tensor& c, int64_t state_dim) {
  Require(u.rank() >= 2, Error::Code::kShape, "scan input must be [..., L, E]");
  Require(c.rank() == u.rank(), Error::Code::kShape,
          "scan C must be [..., L, N] with the same leading extents as u");
  if (Leading(c.shape(), 1) != Leading(u.shape(), 1) || c.dim(-1) != state_dim) {
    Fail(Error::Code::kShape, "scan length mismatch: u " +
                                  ShapeToString(u.shape()) + ", C " +
                                  ShapeToString(c.shape()));
  }
}

}  // namespace

void SsmParams::AppendNamed(const std::string& prefix,
                            std::vector<NamedTensor>& out) const {
  out.emplace_back(prefix + ".a_log", a_log);
  out.emplace_back(prefix + ".d_skip", d_skip);
  out.emplace_back(prefix + ".x_proj", x_proj);
  out.emplace_back(prefix + ".dt_bias", dt_bias);
}

SsmParams InitSsmParams(int64_t channels, int64_t state_dim, Rng& rng) {
  Require(channels >= 1 && state_dim >= 1, Error::Code::kInvalidArgument,
          "ssm dimensions must be positive");
  SsmParams p;
  std::vector<double> a_log(channels * state_dim);
  for (int64_t e = 0; e < channels; ++e) {
    for (int64_t n = 0; n < state_dim; ++n) {
      a_log[e * state_dim + n] = std::log(static_cast<double>(n + 1));
    }
  }
  p.a_log = Tensor::FromData({channels, state_dim}, std::move(a_log), true);
  p.d_skip = Tensor::Full({channels}, 1.0, true);

  const int64_t rows = 2 * state_dim + channels;
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  std::vector<double> proj(rows * channels);
  for (double& v : proj) v = rng.Uniform(-bound, bound);
  p.x_proj = Tensor::FromData({rows, channels}, std::move(proj), true);

  std::vector<double> dt_bias(channels);
  for (double& v : dt_bias) {
    const double dt = std::exp(rng.Uniform(std::log(1e-3), std::log(1e-1)));
    // Inverse softplus.
    v = dt + std::log(-std::expm1(-dt));
  }
  p.dt_bias = Tensor::FromData({channels}, std::move(dt_bias), true);
  return p;
}

DiscretizedPair Discretize(const Tensor& delta, const Tensor& a,
                           const Tensor& b, bool allow_zero_delta) {
  Require(a.rank() == 2, Error::Code::kShape, "A must be [E, N]");
  const int64_t e_dim = a.dim(0);
  const int64_t n_dim = a.dim(1);
  Require(delta.rank() >= 2 && delta.dim(-1) == e_dim, Error::Code::kShape,
          "delta must be [..., L, E]");
  if (b.rank() != delta.rank() || Leading(b.shape(), 1) != Leading(delta.shape(), 1) ||
      b.dim(-1) != n_dim) {
    Fail(Error::Code::kShape, "B " + ShapeToString(b.shape()) +
                                  " does not match delta " +
                                  ShapeToString(delta.shape()));
  }
  for (double d : delta.data()) {
    if (d < 0 || (d == 0 && !allow_zero_delta)) {
      Fail(Error::Code::kInvalidArgument, "delta must be positive");
    }
  }
  const int64_t steps = delta.numel() / e_dim;  // leading * L
  Shape shape = delta.shape();
  shape.push_back(n_dim);
  std::vector<double> a_bar(steps * e_dim * n_dim), b_bar(steps * e_dim * n_dim);
  auto dv = delta.data();
  auto av = a.data();
  auto bv = b.data();
  for (int64_t s = 0; s < steps; ++s) {
    for (int64_t e = 0; e < e_dim; ++e) {
      const double d = dv[s * e_dim + e];
      for (int64_t n = 0; n < n_dim; ++n) {
        const int64_t i = (s * e_dim + e) * n_dim + n;
        a_bar[i] = std::exp(d * av[e * n_dim + n]);
        b_bar[i] = d * bv[s * n_dim + n];
      }
    }
  }
  RecordFlops(FlopKind::kScanCore, 2ull * steps * e_dim * n_dim);

  auto a_bar_copy = std::make_shared<std::vector<double>>(a_bar);
  Tensor a_bar_t = Tensor::MakeResult(
      "discretize_a", shape, std::move(a_bar), {delta, a},
      [delta, a, a_bar_copy, steps, e_dim, n_dim](std::span<const double> g,
                                                  Grads grads) {
        auto dv = delta.data();
        auto av = a.data();
        for (int64_t s = 0; s < steps; ++s) {
          for (int64_t e = 0; e < e_dim; ++e) {
            const double d = dv[s * e_dim + e];
            for (int64_t n = 0; n < n_dim; ++n) {
              const int64_t i = (s * e_dim + e) * n_dim + n;
              const double ga = g[i] * (*a_bar_copy)[i];
              if (grads[0]) (*grads[0])[s * e_dim + e] += ga * av[e * n_dim + n];
              if (grads[1]) (*grads[1])[e * n_dim + n] += ga * d;
            }
          }
        }
      });
  Tensor b_bar_t = Tensor::MakeResult(
      "discretize_b", shape, std::move(b_bar), {delta, b},
      [delta, b, steps, e_dim, n_dim](std::span<const double> g, Grads grads) {
        auto dv = delta.data();
        auto bv = b.data();
        for (int64_t s = 0; s < steps; ++s) {
          for (int64_t e = 0; e < e_dim; ++e) {
            const double d = dv[s * e_dim + e];
            for (int64_t n = 0; n < n_dim; ++n) {
              const double gi = g[(s * e_dim + e) * n_dim + n];
              if (grads[0]) (*grads[0])[s * e_dim + e] += gi * bv[s * n_dim + n];
              if (grads[1]) (*grads[1])[s * n_dim + n] += gi * d;
            }
          }
        }
      });
  return {a_bar_t, b_bar_t};
}

Tensor SelectiveScan(const Tensor& u, const Tensor& a_bar, const Tensor& b_bar,
                     const Tensor& c, const Tensor& d_skip) {
  Require(a_bar.rank() == u.rank() + 1 && b_bar.shape() == a_bar.shape(),
          Error::Code::kShape, "A_bar and B_bar must be [..., L, E, N]");
  const int64_t n_dim = a_bar.dim(-1);
  CheckScanShapes(u, c, n_dim);
  if (Leading(a_bar.shape(), 1) != u.shape()) {
    Fail(Error::Code::kShape, "scan length mismatch: u " +
                                  ShapeToString(u.shape()) + ", A_bar " +
                                  ShapeToString(a_bar.shape()));
  }
  const int64_t e_dim = u.dim(-1);
  const int64_t len = u.dim(-2);
  Require(d_skip.numel() == e_dim, Error::Code::kShape, "D must be [E]");
  const int64_t batch = LeadingCount(u.shape(), 2);

  auto uv = u.data();
  auto av = a_bar.data();
  auto bv = b_bar.data();
  auto cv = c.data();
  auto dv = d_skip.data();
  std::vector<double> y(u.numel());
  // states[((b*E + e)*L + l)*N + n] = h_l for the backward pass.
  auto states = std::make_shared<std::vector<double>>(batch * e_dim * len * n_dim);
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t e = 0; e < e_dim; ++e) {
      double* h_all = states->data() + (b * e_dim + e) * len * n_dim;
      for (int64_t l = 0; l < len; ++l) {
        const int64_t ue = (b * len + l) * e_dim + e;
        const double ul = uv[ue];
        const double* ab = av.data() + ue * n_dim;
        const double* bb = bv.data() + ue * n_dim;
        const double* cl = cv.data() + (b * len + l) * n_dim;
        double* h = h_all + l * n_dim;
        const double* hp = l > 0 ? h - n_dim : nullptr;
        double acc = 0;
        for (int64_t n = 0; n < n_dim; ++n) {
          h[n] = (hp ? ab[n] * hp[n] : 0.0) + bb[n] * ul;
          acc += cl[n] * h[n];
        }
        y[ue] = acc + dv[e] * ul;
      }
    }
  }
  RecordFlops(FlopKind::kScanCore, 2ull * batch * len * e_dim * n_dim);
  return Tensor::MakeResult(
      "selective_scan", u.shape(), std::move(y), {u, a_bar, b_bar, c, d_skip},
      [u, a_bar, b_bar, c, d_skip, states, batch, len, e_dim, n_dim](
          std::span<const double> gy, Grads grads) {
        auto uv = u.data();
        auto av = a_bar.data();
        auto bv = b_bar.data();
        auto cv = c.data();
        auto dv = d_skip.data();
        std::vector<double> gh(n_dim);
        for (int64_t b = 0; b < batch; ++b) {
          for (int64_t e = 0; e < e_dim; ++e) {
            const double* h_all = states->data() + (b * e_dim + e) * len * n_dim;
            std::fill(gh.begin(), gh.end(), 0.0);
            for (int64_t l = len - 1; l >= 0; --l) {
              const int64_t ue = (b * len + l) * e_dim + e;
              const double g = gy[ue];
              const double ul = uv[ue];
              const double* cl = cv.data() + (b * len + l) * n_dim;
              const double* h = h_all + l * n_dim;
              const double* hp = l > 0 ? h - n_dim : nullptr;
              double gu = g * dv[e];
              if (grads[4]) (*grads[4])[e] += g * ul;
              for (int64_t n = 0; n < n_dim; ++n) {
                gh[n] += g * cl[n];
                if (grads[3]) (*grads[3])[(b * len + l) * n_dim + n] += g * h[n];
                const int64_t i = ue * n_dim + n;
                if (grads[2]) (*grads[2])[i] += gh[n] * ul;
                if (grads[1] && hp) (*grads[1])[i] += gh[n] * hp[n];
                gu += gh[n] * bv[i];
                gh[n] *= av[i];
              }
              if (grads[0]) (*grads[0])[ue] += gu;
            }
          }
        }
      });
}

Tensor FusedSelectiveScan(const Tensor& u, const Tensor& delta,
                          const Tensor& a, const Tensor& b, const Tensor& c,
                          const Tensor& d_skip) {
  Require(a.rank() == 2, Error::Code::kShape, "A must be [E, N]");
  const int64_t e_dim = a.dim(0);
  const int64_t n_dim = a.dim(1);
  CheckScanShapes(u, c, n_dim);
  Require(u.dim(-1) == e_dim && delta.shape() == u.shape(), Error::Code::kShape,
          "u and delta must be [..., L, E]");
  Require(b.shape() == c.shape(), Error::Code::kShape, "B and C must match");
  Require(d_skip.numel() == e_dim, Error::Code::kShape, "D must be [E]");
  for (double d : delta.data()) {
    Require(d > 0, Error::Code::kInvalidArgument, "delta must be positive");
  }
  for (double v : a.data()) {
    Require(v <= 0, Error::Code::kInvalidArgument, "A must be non-positive");
  }
  const int64_t len = u.dim(-2);
  const int64_t batch = LeadingCount(u.shape(), 2);

  const double* uv = u.data().data();
  const double* delv = delta.data().data();
  const double* av = a.data().data();
  const double* bv = b.data().data();
  const double* cv = c.data().data();
  const double* dv = d_skip.data().data();
  // A transposed to [N, E] so the inner loops run over contiguous channels.
  std::vector<double> at(n_dim * e_dim);
  for (int64_t e = 0; e < e_dim; ++e) {
    for (int64_t n = 0; n < n_dim; ++n) at[n * e_dim + e] = av[e * n_dim + n];
  }
  // Per sequence b: states laid out [L + 1, N, E] with a zero first block,
  // decays laid out [L, N, E]. Kept only when a backward pass needs them.
  bool keep = false;
  if (GradEnabled()) {
    for (const Tensor* t : {&u, &delta, &a, &b, &c, &d_skip}) {
      if (t->requires_grad()) keep = true;
    }
  }
  const int64_t block = n_dim * e_dim;
  auto states = std::make_shared<std::vector<double>>();
  auto decays = std::make_shared<std::vector<double>>();
  if (keep) {
    states->resize(batch * (len + 1) * block);
    decays->resize(batch * len * block);
  }
  std::vector<double> y(u.numel());
  ParallelFor(batch, [&](int64_t begin, int64_t end) {
    std::vector<double> local(keep ? 0 : 2 * block);
    std::vector<double> du(e_dim), acc(e_dim);
    for (int64_t bi = begin; bi < end; ++bi) {
      double* h = keep ? states->data() + bi * (len + 1) * block : local.data();
      double* dec = keep ? decays->data() + bi * len * block : h + block;
      std::fill(h, h + block, 0.0);
      for (int64_t l = 0; l < len; ++l) {
        const int64_t row = bi * len + l;
        const double* __restrict ul = uv + row * e_dim;
        const double* __restrict dl = delv + row * e_dim;
        const double* bl = bv + row * n_dim;
        const double* cl = cv + row * n_dim;
        if (keep) {
          std::copy(h, h + block, h + block);
          h += block;
        }
        for (int64_t e = 0; e < e_dim; ++e) {
          du[e] = dl[e] * ul[e];
          acc[e] = 0;
        }
        for (int64_t n = 0; n < n_dim; ++n) {
          ScanRow(dl, du.data(), at.data() + n * e_dim, bl[n], cl[n],
                  h + n * e_dim, dec + n * e_dim, acc.data(), e_dim);
        }
        if (keep) dec += block;
        double* yl = y.data() + row * e_dim;
        for (int64_t e = 0; e < e_dim; ++e) yl[e] = acc[e] + dv[e] * ul[e];
      }
    }
  }, 1);
  // Per (step, channel, state) element: delta*A, delta*B*u, A_bar*h, C*h.
  RecordFlops(FlopKind::kScanCore, 4ull * batch * len * e_dim * n_dim);

  return Tensor::MakeResult(
      "fused_selective_scan", u.shape(), std::move(y),
      {u, delta, a, b, c, d_skip},
      [u, delta, b, c, d_skip, at = std::move(at), states, decays, batch, len,
       e_dim, n_dim](std::span<const double> gy, Grads grads) {
        const double* uv = u.data().data();
        const double* delv = delta.data().data();
        const double* bv = b.data().data();
        const double* cv = c.data().data();
        const double* dv = d_skip.data().data();
        const int64_t block = n_dim * e_dim;
        // Gradients for A and D are gathered per channel and state and
        // written out at the end, so the inner loops have no branches.
        std::vector<double> ga(block, 0.0), gd(e_dim, 0.0), gh(block);
        std::vector<double> t_delta(e_dim), t_u(e_dim), t_b(e_dim), t_c(e_dim);
        for (int64_t bi = 0; bi < batch; ++bi) {
          const double* h_all = states->data() + bi * (len + 1) * block;
          const double* dec_all = decays->data() + bi * len * block;
          std::fill(gh.begin(), gh.end(), 0.0);
          for (int64_t l = len - 1; l >= 0; --l) {
            const int64_t row = bi * len + l;
            const double* __restrict g = gy.data() + row * e_dim;
            const double* __restrict ul = uv + row * e_dim;
            const double* __restrict dl = delv + row * e_dim;
            const double* bl = bv + row * n_dim;
            const double* cl = cv + row * n_dim;
            std::fill(t_delta.begin(), t_delta.end(), 0.0);
            std::fill(t_u.begin(), t_u.end(), 0.0);
            for (int64_t e = 0; e < e_dim; ++e) gd[e] += g[e] * ul[e];
            for (int64_t n = 0; n < n_dim; ++n) {
              const double* h = h_all + (l + 1) * block + n * e_dim;
              ScanRowBackward(g, ul, dl, at.data() + n * e_dim, bl[n], cl[n],
                              h, h - block, dec_all + l * block + n * e_dim,
                              gh.data() + n * e_dim, ga.data() + n * e_dim,
                              t_delta.data(), t_u.data(), t_b.data(),
                              t_c.data(), e_dim);
              if (grads[3]) (*grads[3])[row * n_dim + n] += Sum4(t_b.data(), e_dim);
              if (grads[4]) (*grads[4])[row * n_dim + n] += Sum4(t_c.data(), e_dim);
            }
            if (grads[0]) {
              double* gu = grads[0]->data() + row * e_dim;
              for (int64_t e = 0; e < e_dim; ++e) {
                gu[e] += g[e] * dv[e] + dl[e] * t_u[e];
              }
            }
            if (grads[1]) {
              double* gdel = grads[1]->data() + row * e_dim;
              for (int64_t e = 0; e < e_dim; ++e) gdel[e] += t_delta[e];
            }
          }
        }
        if (grads[2]) {
          for (int64_t e = 0; e < e_dim; ++e) {
            for (int64_t n = 0; n < n_dim; ++n) {
              (*grads[2])[e * n_dim + n] += ga[n * e_dim + e];
            }
          }
        }
        if (grads[5]) {
          for (int64_t e = 0; e < e_dim; ++e) (*grads[5])[e] += gd[e];
        }
      });
}

Tensor S6Forward(const Tensor& x, const SsmParams& params) {
  const int64_t e_dim = params.channels();
  const int64_t n_dim = params.state_dim();
  Require(x.rank() >= 2, Error::Code::kShape, "S6 input must be [..., L, E]");
  if (x.dim(-1) != e_dim) {
    Fail(Error::Code::kShape, "S6 input " + ShapeToString(x.shape()) +
                                  " does not match " + std::to_string(e_dim) +
                                  " channels");
  }
  Tensor proj = Linear(x, params.x_proj);
  std::vector<Tensor> parts = Split(proj, -1, {n_dim, n_dim, e_dim});
  Tensor delta = Softplus(Add(parts[2], params.dt_bias));
  Tensor a = Neg(Exp(params.a_log));
  return FusedSelectiveScan(x, delta, a, parts[0], parts[1], params.d_skip);
}

}  // namespace mim::ssm
