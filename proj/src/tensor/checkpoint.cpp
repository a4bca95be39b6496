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

#include "tensor/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace mim {

namespace {

constexpr const char* kFormat = "mim-checkpoint";
constexpr int kVersion = 1;

template <typename T>
void AppendLittleEndian(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.append(bytes, sizeof(T));
}

template <typename T>
T ReadLittleEndian(const char* src) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::filesystem::path WithSuffix(const std::filesystem::path& prefix,
                                 const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

}  // namespace

void SaveCheckpoint(const std::filesystem::path& prefix,
                    const Checkpoint& checkpoint, CheckpointDtype dtype) {
  if (prefix.has_parent_path()) {
    std::filesystem::create_directories(prefix.parent_path());
  }
  std::string payload;
  nlohmann::json entries = nlohmann::json::array();
  const bool f32 = dtype == CheckpointDtype::kFloat32;
  for (const auto& [name, tensor] : checkpoint.tensors) {
    const size_t offset = payload.size();
    for (double v : tensor.data()) {
      if (f32) {
        AppendLittleEndian(payload, static_cast<float>(v));
      } else {
        AppendLittleEndian(payload, v);
      }
    }
    entries.push_back({{"name", name},
                       {"shape", tensor.shape()},
                       {"dtype", f32 ? "float32" : "float64"},
                       {"offset", offset},
                       {"nbytes", payload.size() - offset}});
  }
  nlohmann::json manifest = {{"format", kFormat},
                             {"version", kVersion},
                             {"byte_order", "little"},
                             {"tensors", entries},
                             {"metadata", checkpoint.metadata}};
  {
    std::ofstream bin(WithSuffix(prefix, ".bin"), std::ios::binary);
    if (!bin) Fail(Error::Code::kIo, "cannot write " + prefix.string() + ".bin");
    bin.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  std::ofstream json(WithSuffix(prefix, ".json"));
  if (!json) Fail(Error::Code::kIo, "cannot write " + prefix.string() + ".json");
  json << manifest.dump(2) << "\n";
}

Checkpoint LoadCheckpoint(const std::filesystem::path& prefix) {
  const auto json_path = WithSuffix(prefix, ".json");
  const auto bin_path = WithSuffix(prefix, ".bin");
  std::ifstream json_in(json_path);
  if (!json_in) Fail(Error::Code::kNotFound, "checkpoint manifest not found: " + json_path.string());
  nlohmann::json manifest;
  try {
    json_in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    Fail(Error::Code::kIo, std::string("malformed checkpoint manifest: ") + e.what());
  }
  if (manifest.value("format", "") != kFormat) {
    Fail(Error::Code::kIo, "not a checkpoint manifest: " + json_path.string());
  }
  std::ifstream bin_in(bin_path, std::ios::binary);
  if (!bin_in) Fail(Error::Code::kNotFound, "checkpoint payload not found: " + bin_path.string());
  std::string payload((std::istreambuf_iterator<char>(bin_in)), std::istreambuf_iterator<char>());

  Checkpoint checkpoint;
  checkpoint.metadata = manifest.value("metadata", nlohmann::json::object());
  try {
    for (const auto& entry : manifest.at("tensors")) {
      const std::string name = entry.at("name");
      const Shape shape = entry.at("shape").get<Shape>();
      const std::string dtype = entry.at("dtype");
      const size_t offset = entry.at("offset");
      const size_t width = dtype == "float32" ? 4 : dtype == "float64" ? 8 : 0;
      if (width == 0) Fail(Error::Code::kIo, "unsupported dtype " + dtype);
      const int64_t count = NumElements(shape);
      if (offset + count * width > payload.size()) {
        Fail(Error::Code::kIo, "checkpoint payload truncated at " + name);
      }
      std::vector<double> values(count);
      const char* src = payload.data() + offset;
      for (int64_t i = 0; i < count; ++i) {
        values[i] = width == 4 ? ReadLittleEndian<float>(src + 4 * i)
                               : ReadLittleEndian<double>(src + 8 * i);
      }
      checkpoint.tensors.emplace_back(name, Tensor::FromData(shape, std::move(values)));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(Error::Code::kIo, std::string("malformed checkpoint manifest: ") + e.what());
  }
  return checkpoint;
}

void RestoreInto(const Checkpoint& checkpoint,
                 std::vector<NamedTensor>& destinations) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, tensor] : checkpoint.tensors) by_name[name] = &tensor;
  for (auto& [name, dest] : destinations) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      Fail(Error::Code::kShape, "checkpoint is missing tensor " + name);
    }
    if (it->second->shape() != dest.shape()) {
      Fail(Error::Code::kShape, "checkpoint tensor " + name + " has shape " +
                                    ShapeToString(it->second->shape()) +
                                    ", model expects " +
                                    ShapeToString(dest.shape()));
    }
    auto src = it->second->data();
    auto dst = dest.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace mim
