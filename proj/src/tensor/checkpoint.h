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

#ifndef MIM_TENSOR_CHECKPOINT_H_
#define MIM_TENSOR_CHECKPOINT_H_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tensor/grad_check.h"
#include "tensor/tensor.h"

namespace mim {

// A checkpoint is two files sharing a prefix:
//   <prefix>.bin   little-endian raw tensor payloads, back to back
//   <prefix>.json  manifest: {"format", "version", "tensors": [{name, shape,
//                  dtype, offset, nbytes}], "metadata": {...}}
// dtype is "float64" or "float32"; offsets are byte offsets into the .bin.
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();
};

enum class CheckpointDtype { kFloat64, kFloat32 };

void SaveCheckpoint(const std::filesystem::path& prefix,
                    const Checkpoint& checkpoint,
                    CheckpointDtype dtype = CheckpointDtype::kFloat64);
Checkpoint LoadCheckpoint(const std::filesystem::path& prefix);

// Copies loaded values into existing tensors by name; every destination
// must be present with an identical shape.
void RestoreInto(const Checkpoint& checkpoint,
                 std::vector<NamedTensor>& destinations);

}  // namespace mim

#endif  // MIM_TENSOR_CHECKPOINT_H_
