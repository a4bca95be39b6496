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

#ifndef MIM_DATA_DATASET_H_
#define MIM_DATA_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "metrics/metrics.h"
#include "tensor/tensor.h"

namespace mim::data {

// 8-bit grayscale image, row-major.
struct GrayImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;

  bool operator==(const GrayImage&) const = default;
};

// In memory the mask holds 0/1; on disk it is 0/255.
struct Sample {
  std::string id;
  GrayImage image;
  metrics::Mask mask;
};

// JSON keys are the field names.
struct SynthConfig {
  int64_t height = 64;
  int64_t width = 64;
  int64_t min_targets = 1;
  int64_t max_targets = 3;
  double min_radius = 1.0;
  double max_radius = 4.0;
  double min_contrast = 0.2;
  double max_contrast = 0.8;
  // Box-blur passes over the clutter noise; more passes, smoother clutter.
  int64_t clutter_smoothness = 3;
  uint64_t seed = 0;

  void Validate() const;
  nlohmann::json ToJson() const;
  static SynthConfig FromJson(const nlohmann::json& json, SynthConfig base);
};

// Background intensities in [0, 1] for (seed, index), before targets.
std::vector<double> GenerateBackground(const SynthConfig& config, int64_t index);
// Deterministic in (config, index). Targets are Gaussian blobs; the mask
// marks pixels within one radius of each centre, and targets never touch.
Sample GenerateSample(const SynthConfig& config, int64_t index);

// Binary PGM (P5) with maxval <= 255.
void WritePgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage ReadPgm(const std::filesystem::path& path);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Sorts ids, shuffles them with seed and puts floor(n * train_fraction)
// (clamped to [1, n - 1]) in train. Needs at least two ids.
Split SplitIds(std::vector<std::string> ids, double train_fraction, uint64_t seed);

inline constexpr const char* kManifestSchema = "mim.manifest/1";

struct ManifestEntry {
  std::string id;
  std::string image;  // relative to the dataset root
  std::string mask;
};

struct Manifest {
  std::vector<ManifestEntry> samples;
  Split split;
  uint64_t seed = 0;

  nlohmann::json ToJson() const;
  static Manifest FromJson(const nlohmann::json& json);
};

// Writes images/<id>.pgm, masks/<id>.pgm and manifest.json.
Manifest WriteSyntheticDataset(const std::filesystem::path& root, const SynthConfig& config,
                               int64_t count, double train_fraction = 0.8);

// Reads manifest.json when present. Otherwise pairs images/*.pgm with
// masks/*.pgm by basename and splits with seed.
Manifest OpenDataset(const std::filesystem::path& root, uint64_t seed = 0,
                     double train_fraction = 0.8);

enum class Resize { kNone, kNearest, kBilinear };

struct LoadOptions {
  // Target side for a square resize; 0 keeps the stored size.
  int64_t size = 0;
  // Images resize bilinearly or by nearest neighbour; masks always nearest.
  Resize image_resize = Resize::kBilinear;
};

Sample LoadSample(const std::filesystem::path& root, const ManifestEntry& entry,
                  const LoadOptions& options = {});
std::vector<Sample> LoadSplit(const std::filesystem::path& root, const Manifest& manifest,
                              const std::vector<std::string>& ids,
                              const LoadOptions& options = {});

GrayImage ResizeImage(const GrayImage& image, int64_t height, int64_t width, Resize mode);
metrics::Mask ResizeMask(const metrics::Mask& mask, int64_t height, int64_t width);

// Stacks grayscale images into [B, channels, H, W] scaled to [0, 1], with the
// gray plane replicated across channels.
Tensor ImagesToTensor(const std::vector<const GrayImage*>& images, int64_t channels);
// Stacks masks into [B, 1, H, W] of 0/1.
Tensor MasksToTensor(const std::vector<const metrics::Mask*>& masks);

}  // namespace mim::data

#endif  // MIM_DATA_DATASET_H_
