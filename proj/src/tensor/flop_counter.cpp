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

#include "tensor/flop_counter.h"

namespace mim {

namespace {

thread_local FlopCounter* t_counter = nullptr;
thread_local std::vector<std::string> t_scopes;

bool UnderPrefix(const std::string& path, const std::string& prefix) {
  if (prefix.empty()) return true;
  if (path.size() < prefix.size()) return false;
  if (path.compare(0, prefix.size(), prefix) != 0) return false;
  return path.size() == prefix.size() || path[prefix.size()] == '.';
}

}  // namespace

void FlopCounter::Add(const std::string& scope, FlopKind kind, uint64_t count) {
  by_scope_[scope][static_cast<int>(kind)] += count;
}

uint64_t FlopCounter::Total() const { return TotalUnder(""); }

uint64_t FlopCounter::Total(FlopKind kind) const {
  return TotalUnder("", kind);
}

uint64_t FlopCounter::TotalUnder(const std::string& prefix) const {
  uint64_t total = 0;
  for (int k = 0; k < kNumFlopKinds; ++k) {
    total += TotalUnder(prefix, static_cast<FlopKind>(k));
  }
  return total;
}

uint64_t FlopCounter::TotalUnder(const std::string& prefix,
                                 FlopKind kind) const {
  uint64_t total = 0;
  for (const auto& [path, tally] : by_scope_) {
    if (UnderPrefix(path, prefix)) total += tally[static_cast<int>(kind)];
  }
  return total;
}

FlopCounterScope::FlopCounterScope(FlopCounter* counter)
    : previous_(t_counter) {
  t_counter = counter;
}

FlopCounterScope::~FlopCounterScope() { t_counter = previous_; }

FlopScope::FlopScope(const std::string& name) {
  if (t_scopes.empty()) {
    t_scopes.push_back(name);
  } else {
    t_scopes.push_back(t_scopes.back() + "." + name);
  }
}

FlopScope::~FlopScope() { t_scopes.pop_back(); }

bool CountingFlops() { return t_counter != nullptr; }

void RecordFlops(FlopKind kind, uint64_t count) {
  if (t_counter == nullptr) return;
  static const std::string kRoot = "(root)";
  t_counter->Add(t_scopes.empty() ? kRoot : t_scopes.back(), kind, count);
}

}  // namespace mim
