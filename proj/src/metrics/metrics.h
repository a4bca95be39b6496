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

#ifndef MIM_METRICS_METRICS_H_
#define MIM_METRICS_METRICS_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace mim::metrics {

// Binary mask, row-major, values 0 or 1.
struct Mask {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;

  static Mask Zeros(int64_t height, int64_t width);
  int64_t Count() const;
  uint8_t at(int64_t r, int64_t c) const { return pixels[r * width + c]; }
};

// Per-pixel target probabilities, row-major.
struct ProbMap {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> values;
};

// Pixels with probability >= threshold become 1.
Mask Binarize(const ProbMap& probs, double threshold = 0.5);

// Notes about degenerate inputs (empty unions, no targets) are appended to
// warnings when it is non-null.
using Warnings = std::vector<std::string>;

// Dataset-accumulated IoU: sum of intersections over sum of unions. An empty
// total union is defined as 1.
double Iou(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
           Warnings* warnings = nullptr);
// Mean of per-sample IoU; a sample with an empty union contributes 1.
double NIou(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
            Warnings* warnings = nullptr);

struct Component {
  int64_t area = 0;
  // Coordinate sums; the centroid is sum / area.
  int64_t row_sum = 0;
  int64_t col_sum = 0;
  // First pixel in raster order; components are listed in this order.
  int64_t first = 0;

  double centroid_row() const { return static_cast<double>(row_sum) / area; }
  double centroid_col() const { return static_cast<double>(col_sum) / area; }
};

// connectivity is 4 or 8.
std::vector<Component> ConnectedComponents(const Mask& mask, int connectivity = 8);

struct MatchOptions {
  // A target is detected when a predicted centroid lies strictly closer.
  double radius = 3.0;
  int connectivity = 8;
};

struct PdFaResult {
  int64_t targets = 0;
  int64_t detected = 0;
  int64_t false_pixels = 0;
  int64_t total_pixels = 0;
  // detected / targets; 1 when there are no targets.
  double pd = 1.0;
  // false_pixels / total_pixels.
  double fa = 0.0;
};

// Greedy nearest-first one-to-one matching of predicted to ground-truth
// components per image. Distances compare exactly on integer coordinate sums.
PdFaResult PdFa(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                const MatchOptions& options = {}, Warnings* warnings = nullptr);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // sorted by fpr, then tpr
  double auc = 0.0;
};

// Pixel-level ROC at thresholds k / (K - 1), k = 0..K-1, completed with the
// (0,0) and (1,1) endpoints; AUC by the trapezoid rule.
RocCurve Roc(const std::vector<ProbMap>& probs, const std::vector<Mask>& gts,
             int64_t thresholds);
void WriteRocCsv(const std::filesystem::path& path, const RocCurve& roc);

inline constexpr const char* kMetricsSchema = "mim.metrics/1";

struct MetricsReport {
  int64_t samples = 0;
  double threshold = 0.5;
  double iou = 0.0;
  double niou = 0.0;
  PdFaResult pdfa;
  RocCurve roc;
  Warnings warnings;

  nlohmann::json ToJson() const;
};

struct EvaluateOptions {
  double threshold = 0.5;
  int64_t roc_thresholds = 101;
  MatchOptions match;
};

MetricsReport ComputeMetrics(const std::vector<ProbMap>& probs, const std::vector<Mask>& gts,
                             const EvaluateOptions& options = {});

}  // namespace mim::metrics

#endif  // MIM_METRICS_METRICS_H_
