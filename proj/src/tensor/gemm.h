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

#ifndef MIM_TENSOR_GEMM_H_
#define MIM_TENSOR_GEMM_H_

#include <cstdint>

namespace mim {

// C[m, n] += op(A)[m, k] * op(B)[k, n], row-major with leading dimensions.
// op(A) is A or A^T (A stored [k, m]); likewise for B. The summation order
// over k depends only on the shapes, so results are reproducible.
void Gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const double* a, int64_t lda, const double* b, int64_t ldb,
          double* c, int64_t ldc);

}  // namespace mim

#endif  // MIM_TENSOR_GEMM_H_
