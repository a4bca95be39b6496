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

#ifndef MIM_TESTS_ORACLE_METRICS_ORACLE_H_
#define MIM_TESTS_ORACLE_METRICS_ORACLE_H_

// Brute-force reference metrics by integer counting. Deliberately written
// differently from the library: components by label propagation to a fixed
// point, matching by repeated global-minimum search.

#include <cstdint>
#include <map>
#include <vector>

#include "metrics/metrics.h"
#include "tensor/random.h"

namespace mim::oracle {

struct OracleComponent {
  int64_t label = 0;  // smallest pixel index in the component
  int64_t area = 0;
  int64_t row_sum = 0;
  int64_t col_sum = 0;
};

inline std::vector<OracleComponent> OracleComponents(const metrics::Mask& m, int connectivity = 8) {
  const int64_t h = m.height, w = m.width;
  std::vector<int64_t> label(h * w, -1);
  for (int64_t i = 0; i < h * w; ++i) {
    if (m.pixels[i]) label[i] = i;
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int64_t r = 0; r < h; ++r) {
      for (int64_t c = 0; c < w; ++c) {
        if (label[r * w + c] < 0) continue;
        for (int64_t dr = -1; dr <= 1; ++dr) {
          for (int64_t dc = -1; dc <= 1; ++dc) {
            if (connectivity == 4 && dr * dc != 0) continue;
            const int64_t rr = r + dr, cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
            const int64_t l = label[rr * w + cc];
            if (l >= 0 && l < label[r * w + c]) {
              label[r * w + c] = l;
              changed = true;
            }
          }
        }
      }
    }
  }
  std::map<int64_t, OracleComponent> by_label;
  for (int64_t i = 0; i < h * w; ++i) {
    if (label[i] < 0) continue;
    OracleComponent& comp = by_label[label[i]];
    comp.label = label[i];
    comp.area += 1;
    comp.row_sum += i / w;
    comp.col_sum += i % w;
  }
  std::vector<OracleComponent> out;
  for (const auto& [l, comp] : by_label) out.push_back(comp);
  return out;
}

struct OracleMetrics {
  int64_t inter_total = 0, union_total = 0;
  double iou = 0, niou = 0;
  int64_t targets = 0, detected = 0, false_pixels = 0, total_pixels = 0;
};

// Exact comparison of squared centroid distance against r2 (integer).
inline __int128 DistNum(const OracleComponent& g, const OracleComponent& p) {
  const __int128 dr = static_cast<__int128>(g.row_sum) * p.area - static_cast<__int128>(p.row_sum) * g.area;
  const __int128 dc = static_cast<__int128>(g.col_sum) * p.area - static_cast<__int128>(p.col_sum) * g.area;
  return dr * dr + dc * dc;
}
inline __int128 DistDen(const OracleComponent& g, const OracleComponent& p) {
  const __int128 a = static_cast<__int128>(g.area) * p.area;
  return a * a;
}

inline OracleMetrics BruteForceMetrics(const std::vector<metrics::Mask>& preds,
                                       const std::vector<metrics::Mask>& gts,
                                       int64_t radius2 = 9, int connectivity = 8) {
  OracleMetrics o;
  double niou_sum = 0;
  for (size_t s = 0; s < preds.size(); ++s) {
    const metrics::Mask& p = preds[s];
    const metrics::Mask& g = gts[s];
    int64_t inter = 0, uni = 0;
    for (int64_t i = 0; i < p.height * p.width; ++i) {
      if (p.pixels[i] == 1 && g.pixels[i] == 1) ++inter;
      if (p.pixels[i] == 1 || g.pixels[i] == 1) ++uni;
    }
    o.inter_total += inter;
    o.union_total += uni;
    niou_sum += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);

    std::vector<OracleComponent> gc = OracleComponents(g, connectivity);
    std::vector<OracleComponent> pc = OracleComponents(p, connectivity);
    std::vector<bool> gu(gc.size(), false), pu(pc.size(), false);
    while (true) {
      int64_t best_g = -1, best_p = -1;
      __int128 best_num = 0, best_den = 1;
      for (size_t a = 0; a < gc.size(); ++a) {
        if (gu[a]) continue;
        for (size_t b = 0; b < pc.size(); ++b) {
          if (pu[b]) continue;
          const __int128 num = DistNum(gc[a], pc[b]), den = DistDen(gc[a], pc[b]);
          if (!(num < radius2 * den)) continue;
          // Strictly closer wins; ties keep the first pair in (gt, pred) order.
          if (best_g < 0 || num * best_den < best_num * den) {
            best_g = static_cast<int64_t>(a);
            best_p = static_cast<int64_t>(b);
            best_num = num;
            best_den = den;
          }
        }
      }
      if (best_g < 0) break;
      gu[best_g] = pu[best_p] = true;
      ++o.detected;
    }
    for (size_t b = 0; b < pc.size(); ++b) {
      if (!pu[b]) o.false_pixels += pc[b].area;
    }
    o.targets += static_cast<int64_t>(gc.size());
    o.total_pixels += p.height * p.width;
  }
  o.iou = o.union_total == 0 ? 1.0 : static_cast<double>(o.inter_total) / static_cast<double>(o.union_total);
  o.niou = preds.empty() ? 0.0 : niou_sum / static_cast<double>(preds.size());
  return o;
}

// Random sparse mask: a handful of random blobs and specks.
inline metrics::Mask RandomBlobMask(int64_t h, int64_t w, Rng& rng) {
  metrics::Mask m = metrics::Mask::Zeros(h, w);
  const int64_t blobs = static_cast<int64_t>(rng.Below(5));
  for (int64_t b = 0; b < blobs; ++b) {
    const int64_t r0 = static_cast<int64_t>(rng.Below(h)), c0 = static_cast<int64_t>(rng.Below(w));
    const int64_t bh = 1 + static_cast<int64_t>(rng.Below(3)), bw = 1 + static_cast<int64_t>(rng.Below(3));
    for (int64_t r = r0; r < std::min(h, r0 + bh); ++r) {
      for (int64_t c = c0; c < std::min(w, c0 + bw); ++c) {
        if (rng.Uniform() < 0.85) m.pixels[r * w + c] = 1;
      }
    }
  }
  const int64_t specks = static_cast<int64_t>(rng.Below(4));
  for (int64_t s = 0; s < specks; ++s) m.pixels[rng.Below(static_cast<uint64_t>(h * w))] = 1;
  return m;
}

// Pairs that sit on the strict < 3 px boundary: a single ground-truth pixel
// and a prediction whose centroid lies at squared distance 4, 8, 9 or 10.
inline void BoundaryPair(int variant, metrics::Mask& pred, metrics::Mask& gt, Rng& rng) {
  const int64_t h = gt.height, w = gt.width;
  pred = metrics::Mask::Zeros(h, w);
  gt = metrics::Mask::Zeros(h, w);
  const int64_t r = 4 + static_cast<int64_t>(rng.Below(8)), c = 4 + static_cast<int64_t>(rng.Below(8));
  gt.pixels[r * w + c] = 1;
  switch (variant % 6) {
    case 0:  // distance exactly 3 along a row
      pred.pixels[r * w + c + 3] = 1;
      break;
    case 1:  // distance 2
      pred.pixels[(r + 2) * w + c] = 1;
      break;
    case 2:  // three-pixel bar, centroid offset (-3, 0) exactly
      pred.pixels[(r - 3) * w + c - 1] = 1;
      pred.pixels[(r - 3) * w + c] = 1;
      pred.pixels[(r - 3) * w + c + 1] = 1;
      break;
    case 3:  // sqrt(8) < 3
      pred.pixels[(r + 2) * w + c + 2] = 1;
      break;
    case 4:  // sqrt(10) > 3
      pred.pixels[(r + 3) * w + c + 1] = 1;
      break;
    default:  // centroid at (2.5, 1.5) offset: squared distance 8.5 < 9
      pred.pixels[(r + 2) * w + c + 1] = 1;
      pred.pixels[(r + 3) * w + c + 1] = 1;
      pred.pixels[(r + 2) * w + c + 2] = 1;
      pred.pixels[(r + 3) * w + c + 2] = 1;
      break;
  }
}

}  // namespace mim::oracle

#endif  // MIM_TESTS_ORACLE_METRICS_ORACLE_H_
