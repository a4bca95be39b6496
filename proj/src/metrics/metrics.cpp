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

#include "metrics/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <tuple>

#include "tensor/tensor.h"

namespace mim::metrics {

namespace {

void CheckPair(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) {
    Fail(Error::Code::kShape, "mask shapes differ: " + std::to_string(a.height) + "x" +
                                  std::to_string(a.width) + " vs " + std::to_string(b.height) +
                                  "x" + std::to_string(b.width));
  }
}

void CheckLists(size_t preds, size_t gts) {
  if (preds != gts) {
    Fail(Error::Code::kShape, "prediction count " + std::to_string(preds) +
                                  " does not match ground-truth count " + std::to_string(gts));
  }
}

void Warn(Warnings* warnings, std::string message) {
  if (warnings) warnings->push_back(std::move(message));
}

struct Overlap {
  int64_t intersection = 0;
  int64_t union_ = 0;
};

Overlap CountOverlap(const Mask& p, const Mask& g) {
  CheckPair(p, g);
  Overlap o;
  for (size_t i = 0; i < p.pixels.size(); ++i) {
    const bool a = p.pixels[i] != 0, b = g.pixels[i] != 0;
    o.intersection += a && b;
    o.union_ += a || b;
  }
  return o;
}

// Squared centroid distance as an exact fraction num / den.
struct Distance2 {
  __int128 num = 0;
  __int128 den = 1;
  size_t gt = 0;
  size_t pred = 0;
};

Distance2 CentroidDistance2(const Component& a, const Component& b) {
  const __int128 dr = static_cast<__int128>(a.row_sum) * b.area -
                      static_cast<__int128>(b.row_sum) * a.area;
  const __int128 dc = static_cast<__int128>(a.col_sum) * b.area -
                      static_cast<__int128>(b.col_sum) * a.area;
  const __int128 areas = static_cast<__int128>(a.area) * b.area;
  return {dr * dr + dc * dc, areas * areas};
}

bool Closer(const Distance2& x, const Distance2& y) {
  const __int128 lhs = x.num * y.den, rhs = y.num * x.den;
  if (lhs != rhs) return lhs < rhs;
  return std::tie(x.gt, x.pred) < std::tie(y.gt, y.pred);
}

// num / den < radius^2, exact when radius^2 is an integer.
bool WithinRadius(const Distance2& d, double radius) {
  const double r2 = radius * radius;
  if (r2 == std::floor(r2) && r2 < 1e15) {
    return d.num < static_cast<__int128>(r2) * d.den;
  }
  return static_cast<double>(d.num) / static_cast<double>(d.den) < r2;
}

}  // namespace

Mask Mask::Zeros(int64_t height, int64_t width) {
  return {height, width, std::vector<uint8_t>(height * width, 0)};
}

int64_t Mask::Count() const {
  int64_t n = 0;
  for (uint8_t v : pixels) n += v != 0;
  return n;
}

Mask Binarize(const ProbMap& probs, double threshold) {
  Mask m = Mask::Zeros(probs.height, probs.width);
  for (size_t i = 0; i < probs.values.size(); ++i) m.pixels[i] = probs.values[i] >= threshold;
  return m;
}

double Iou(const std::vector<Mask>& preds, const std::vector<Mask>& gts, Warnings* warnings) {
  CheckLists(preds.size(), gts.size());
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    Overlap o = CountOverlap(preds[i], gts[i]);
    inter += o.intersection;
    uni += o.union_;
  }
  if (uni == 0) {
    Warn(warnings, "iou: prediction and ground truth are empty everywhere; iou defined as 1");
    return 1.0;
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double NIou(const std::vector<Mask>& preds, const std::vector<Mask>& gts, Warnings* warnings) {
  CheckLists(preds.size(), gts.size());
  Require(!preds.empty(), Error::Code::kInvalidArgument, "niou needs at least one sample");
  double total = 0.0;
  int64_t empty = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    Overlap o = CountOverlap(preds[i], gts[i]);
    if (o.union_ == 0) {
      ++empty;
      total += 1.0;
    } else {
      total += static_cast<double>(o.intersection) / static_cast<double>(o.union_);
    }
  }
  if (empty > 0) {
    Warn(warnings, "niou: " + std::to_string(empty) +
                       " sample(s) with an empty union counted as 1");
  }
  return total / static_cast<double>(preds.size());
}

std::vector<Component> ConnectedComponents(const Mask& mask, int connectivity) {
  Require(connectivity == 4 || connectivity == 8, Error::Code::kInvalidArgument,
          "connectivity must be 4 or 8");
  const int64_t h = mask.height, w = mask.width;
  std::vector<int64_t> label(h * w, -1);
  std::vector<Component> out;
  std::vector<int64_t> stack;
  for (int64_t start = 0; start < h * w; ++start) {
    if (!mask.pixels[start] || label[start] >= 0) continue;
    const int64_t id = static_cast<int64_t>(out.size());
    Component comp;
    comp.first = start;
    label[start] = id;
    stack.assign(1, start);
    while (!stack.empty()) {
      const int64_t p = stack.back();
      stack.pop_back();
      const int64_t r = p / w, c = p % w;
      ++comp.area;
      comp.row_sum += r;
      comp.col_sum += c;
      for (int64_t dr = -1; dr <= 1; ++dr) {
        for (int64_t dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (connectivity == 4 && dr != 0 && dc != 0) continue;
          const int64_t rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const int64_t q = rr * w + cc;
          if (mask.pixels[q] && label[q] < 0) {
            label[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
    out.push_back(comp);
  }
  return out;
}

PdFaResult PdFa(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                const MatchOptions& options, Warnings* warnings) {
  CheckLists(preds.size(), gts.size());
  PdFaResult result;
  for (size_t i = 0; i < preds.size(); ++i) {
    CheckPair(preds[i], gts[i]);
    std::vector<Component> pc = ConnectedComponents(preds[i], options.connectivity);
    std::vector<Component> gc = ConnectedComponents(gts[i], options.connectivity);
    std::vector<Distance2> pairs;
    for (size_t g = 0; g < gc.size(); ++g) {
      for (size_t p = 0; p < pc.size(); ++p) {
        Distance2 d = CentroidDistance2(gc[g], pc[p]);
        d.gt = g;
        d.pred = p;
        if (WithinRadius(d, options.radius)) pairs.push_back(d);
      }
    }
    std::sort(pairs.begin(), pairs.end(), Closer);
    std::vector<bool> gt_used(gc.size(), false), pred_used(pc.size(), false);
    for (const Distance2& d : pairs) {
      if (gt_used[d.gt] || pred_used[d.pred]) continue;
      gt_used[d.gt] = pred_used[d.pred] = true;
      ++result.detected;
    }
    for (size_t p = 0; p < pc.size(); ++p) {
      if (!pred_used[p]) result.false_pixels += pc[p].area;
    }
    result.targets += static_cast<int64_t>(gc.size());
    result.total_pixels += preds[i].height * preds[i].width;
  }
  if (result.targets == 0) {
    Warn(warnings, "pd: no ground-truth targets; pd defined as 1");
    result.pd = 1.0;
  } else {
    result.pd = static_cast<double>(result.detected) / static_cast<double>(result.targets);
  }
  result.fa = result.total_pixels == 0 ? 0.0
                                       : static_cast<double>(result.false_pixels) /
                                             static_cast<double>(result.total_pixels);
  return result;
}

RocCurve Roc(const std::vector<ProbMap>& probs, const std::vector<Mask>& gts,
             int64_t thresholds) {
  Require(thresholds >= 2, Error::Code::kInvalidArgument, "roc needs at least 2 thresholds");
  CheckLists(probs.size(), gts.size());
  std::vector<int64_t> tp(thresholds, 0), fp(thresholds, 0);
  int64_t positives = 0, negatives = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    const ProbMap& pm = probs[i];
    const Mask& g = gts[i];
    if (pm.height != g.height || pm.width != g.width) {
      Fail(Error::Code::kShape, "probability map and mask shapes differ");
    }
    for (size_t j = 0; j < pm.values.size(); ++j) {
      const bool pos = g.pixels[j] != 0;
      positives += pos;
      negatives += !pos;
      for (int64_t k = 0; k < thresholds; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(thresholds - 1);
        if (pm.values[j] >= t) {
          tp[k] += pos;
          fp[k] += !pos;
        }
      }
    }
  }
  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  roc.points.push_back({1.0, 1.0});
  for (int64_t k = 0; k < thresholds; ++k) {
    RocPoint p;
    p.tpr = positives ? static_cast<double>(tp[k]) / static_cast<double>(positives) : 0.0;
    p.fpr = negatives ? static_cast<double>(fp[k]) / static_cast<double>(negatives) : 0.0;
    roc.points.push_back(p);
  }
  std::sort(roc.points.begin(), roc.points.end(), [](const RocPoint& a, const RocPoint& b) {
    return std::tie(a.fpr, a.tpr) < std::tie(b.fpr, b.tpr);
  });
  roc.points.erase(std::unique(roc.points.begin(), roc.points.end(),
                               [](const RocPoint& a, const RocPoint& b) {
                                 return a.fpr == b.fpr && a.tpr == b.tpr;
                               }),
                   roc.points.end());
  for (size_t i = 1; i < roc.points.size(); ++i) {
    const RocPoint& a = roc.points[i - 1];
    const RocPoint& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return roc;
}

void WriteRocCsv(const std::filesystem::path& path, const RocCurve& roc) {
  std::ofstream out(path);
  if (!out) Fail(Error::Code::kIo, "cannot write " + path.string());
  out << "fpr,tpr\n";
  char line[64];
  for (const RocPoint& p : roc.points) {
    std::snprintf(line, sizeof(line), "%.17g,%.17g\n", p.fpr, p.tpr);
    out << line;
  }
  if (!out) Fail(Error::Code::kIo, "failed writing " + path.string());
}

nlohmann::json MetricsReport::ToJson() const {
  nlohmann::json roc_points = nlohmann::json::array();
  for (const RocPoint& p : roc.points) roc_points.push_back({p.fpr, p.tpr});
  return {
      {"schema", kMetricsSchema},
      {"samples", samples},
      {"threshold", threshold},
      {"iou", iou},
      {"niou", niou},
      {"pd", pdfa.pd},
      {"fa", pdfa.fa},
      {"fa_x1e6", pdfa.fa * 1e6},
      {"targets", pdfa.targets},
      {"detected", pdfa.detected},
      {"false_pixels", pdfa.false_pixels},
      {"total_pixels", pdfa.total_pixels},
      {"roc", roc_points},
      {"auc", roc.auc},
      {"warnings", warnings},
  };
}

MetricsReport ComputeMetrics(const std::vector<ProbMap>& probs, const std::vector<Mask>& gts,
                             const EvaluateOptions& options) {
  CheckLists(probs.size(), gts.size());
  MetricsReport report;
  report.samples = static_cast<int64_t>(probs.size());
  report.threshold = options.threshold;
  std::vector<Mask> preds;
  preds.reserve(probs.size());
  for (const ProbMap& p : probs) preds.push_back(Binarize(p, options.threshold));
  report.iou = Iou(preds, gts, &report.warnings);
  report.niou = preds.empty() ? 0.0 : NIou(preds, gts, &report.warnings);
  report.pdfa = PdFa(preds, gts, options.match, &report.warnings);
  report.roc = Roc(probs, gts, options.roc_thresholds);
  return report;
}

}  // namespace mim::metrics
