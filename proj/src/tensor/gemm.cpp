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

#include "tensor/gemm.h"

#include <algorithm>
#include <vector>

namespace mim {

namespace {

constexpr int64_t kMr = 4;
constexpr int64_t kNr = 8;
constexpr int64_t kKc = 256;
constexpr int64_t kMc = 96;
constexpr int64_t kNc = 1024;

// Packs an mc x kc block of op(A) into row panels of kMr, zero padded.
void PackA(bool trans, const double* a, int64_t lda, int64_t i0, int64_t p0,
           int64_t mc, int64_t kc, double* out) {
  for (int64_t ir = 0; ir < mc; ir += kMr) {
    const int64_t rows = std::min(kMr, mc - ir);
    for (int64_t p = 0; p < kc; ++p) {
      for (int64_t i = 0; i < kMr; ++i) {
        double v = 0.0;
        if (i < rows) {
          const int64_t row = i0 + ir + i;
          const int64_t col = p0 + p;
          v = trans ? a[col * lda + row] : a[row * lda + col];
        }
        *out++ = v;
      }
    }
  }
}

// Packs a kc x nc block of op(B) into column panels of kNr, zero padded.
void PackB(bool trans, const double* b, int64_t ldb, int64_t p0, int64_t j0,
           int64_t kc, int64_t nc, double* out) {
  for (int64_t jr = 0; jr < nc; jr += kNr) {
    const int64_t cols = std::min(kNr, nc - jr);
    for (int64_t p = 0; p < kc; ++p) {
      const int64_t row = p0 + p;
      if (!trans && cols == kNr) {
        const double* src = b + row * ldb + j0 + jr;
        std::copy(src, src + kNr, out);
        out += kNr;
        continue;
      }
      for (int64_t j = 0; j < kNr; ++j) {
        double v = 0.0;
        if (j < cols) {
          const int64_t col = j0 + jr + j;
          v = trans ? b[col * ldb + row] : b[row * ldb + col];
        }
        *out++ = v;
      }
    }
  }
}

void MicroKernel(int64_t kc, const double* __restrict a, const double* __restrict b,
                 double* c, int64_t ldc, int64_t rows, int64_t cols) {
  double acc[kMr][kNr] = {};
  for (int64_t p = 0; p < kc; ++p) {
    const double* bp = b + p * kNr;
    const double* ap = a + p * kMr;
    for (int64_t i = 0; i < kMr; ++i) {
      const double ai = ap[i];
      for (int64_t j = 0; j < kNr; ++j) acc[i][j] += ai * bp[j];
    }
  }
  for (int64_t i = 0; i < rows; ++i) {
    double* ci = c + i * ldc;
    for (int64_t j = 0; j < cols; ++j) ci[j] += acc[i][j];
  }
}

}  // namespace

void Gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const double* a, int64_t lda, const double* b, int64_t ldb,
          double* c, int64_t ldc) {
  if (m <= 0 || n <= 0 || k <= 0) return;
  thread_local std::vector<double> a_pack;
  thread_local std::vector<double> b_pack;
  const int64_t nc_max = std::min(kNc, n);
  const int64_t kc_max = std::min(kKc, k);
  b_pack.resize(((nc_max + kNr - 1) / kNr) * kNr * kc_max);
  a_pack.resize(((std::min(kMc, m) + kMr - 1) / kMr) * kMr * kc_max);
  for (int64_t j0 = 0; j0 < n; j0 += kNc) {
    const int64_t nc = std::min(kNc, n - j0);
    for (int64_t p0 = 0; p0 < k; p0 += kKc) {
      const int64_t kc = std::min(kKc, k - p0);
      PackB(trans_b, b, ldb, p0, j0, kc, nc, b_pack.data());
      for (int64_t i0 = 0; i0 < m; i0 += kMc) {
        const int64_t mc = std::min(kMc, m - i0);
        PackA(trans_a, a, lda, i0, p0, mc, kc, a_pack.data());
        for (int64_t jr = 0; jr < nc; jr += kNr) {
          const double* bp = b_pack.data() + (jr / kNr) * kNr * kc;
          const int64_t cols = std::min(kNr, nc - jr);
          for (int64_t ir = 0; ir < mc; ir += kMr) {
            const double* ap = a_pack.data() + (ir / kMr) * kMr * kc;
            MicroKernel(kc, ap, bp, c + (i0 + ir) * ldc + j0 + jr, ldc,
                        std::min(kMr, mc - ir), cols);
          }
        }
      }
    }
  }
}

}  // namespace mim
