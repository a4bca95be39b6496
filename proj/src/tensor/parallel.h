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

#ifndef MIM_TENSOR_PARALLEL_H_
#define MIM_TENSOR_PARALLEL_H_

#include <cstdint>
#include <functional>

namespace mim {

// Worker cap: MIM_THREADS when set and positive, else the hardware count.
int MaxThreads();

// Splits [0, n) into contiguous chunks, one per worker. Each index is owned
// by exactly one worker, so writes keyed by index never race and results do
// not depend on scheduling.
void ParallelFor(int64_t n, const std::function<void(int64_t, int64_t)>& body,
                 int64_t min_chunk = 1);

}  // namespace mim

#endif  // MIM_TENSOR_PARALLEL_H_
