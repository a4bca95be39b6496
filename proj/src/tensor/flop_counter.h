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

#ifndef MIM_TENSOR_FLOP_COUNTER_H_
#define MIM_TENSOR_FLOP_COUNTER_H_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mim {

// Categories of counted work. kMac covers conv/linear/matmul at 2 flops per
// multiply-accumulate; kScanCore is the selective-scan recurrence; kPointwise
// is normalization and activation at 5 flops per element; kElementwise is
// arithmetic at 1 flop per element.
enum class FlopKind : int { kMac = 0, kScanCore, kPointwise, kElementwise };
inline constexpr int kNumFlopKinds = 4;

using FlopTally = std::array<uint64_t, kNumFlopKinds>;

class FlopCounter {
 public:
  void Add(const std::string& scope, FlopKind kind, uint64_t count);

  uint64_t Total() const;
  uint64_t Total(FlopKind kind) const;
  // Sum over every scope path that equals prefix or starts with "prefix.".
  uint64_t TotalUnder(const std::string& prefix) const;
  uint64_t TotalUnder(const std::string& prefix, FlopKind kind) const;
  const std::map<std::string, FlopTally>& by_scope() const { return by_scope_; }

 private:
  std::map<std::string, FlopTally> by_scope_;
};

// Routes op flop records on this thread into counter while alive.
class FlopCounterScope {
 public:
  explicit FlopCounterScope(FlopCounter* counter);
  ~FlopCounterScope();
  FlopCounterScope(const FlopCounterScope&) = delete;
  FlopCounterScope& operator=(const FlopCounterScope&) = delete;

 private:
  FlopCounter* previous_;
};

// Names the module currently executing; nested scopes join with '.'.
class FlopScope {
 public:
  explicit FlopScope(const std::string& name);
  ~FlopScope();
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;
};

bool CountingFlops();
void RecordFlops(FlopKind kind, uint64_t count);

}  // namespace mim

#endif  // MIM_TENSOR_FLOP_COUNTER_H_
