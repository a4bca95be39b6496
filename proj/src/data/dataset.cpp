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

#include "data/dataset.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "tensor/random.h"

namespace mim::data {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kBackgroundStream = 0x6267;
constexpr uint64_t kTargetStream = 0x7467;

void BoxBlur(std::vector<double>& v, int64_t h, int64_t w) {
  std::vector<double> out(v.size());
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) {
      double sum = 0;
      int count = 0;
      for (int64_t dr = -1; dr <= 1; ++dr) {
        for (int64_t dc = -1; dc <= 1; ++dc) {
          const int64_t rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          sum += v[rr * w + cc];
          ++count;
        }
      }
      out[r * w + c] = sum / count;
    }
  }
  v.swap(out);
}

uint8_t ToByte(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::string ReadToken(std::istream& in) {
  std::string token;
  while (true) {
    const int ch = in.get();
    if (ch == EOF) break;
    if (ch == '#' && token.empty()) {
      std::string comment;
      std::getline(in, comment);
      continue;
    }
    if (std::isspace(ch)) {
      if (token.empty()) continue;
      break;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

int64_t ParseHeaderInt(const std::string& token, const fs::path& path, const char* what) {
  if (token.empty() || !std::all_of(token.begin(), token.end(), ::isdigit) ||
      token.size() > 9) {
    Fail(Error::Code::kIo, "malformed PGM header in " + path.string() + ": bad " + what);
  }
  return std::stoll(token);
}

std::string Basename(const fs::path& p) { return p.stem().string(); }

}  // namespace

void SynthConfig::Validate() const {
  auto check = [](bool ok, const std::string& message) {
    if (!ok) Fail(Error::Code::kConfig, "synth config: " + message);
  };
  check(height >= 1 && width >= 1, "image extents must be positive");
  check(min_targets >= 1 && max_targets >= min_targets, "need 1 <= min_targets <= max_targets");
  check(min_radius > 0 && max_radius >= min_radius, "need 0 < min_radius <= max_radius");
  check(min_contrast >= 0 && max_contrast >= min_contrast && max_contrast <= 1,
        "need 0 <= min_contrast <= max_contrast <= 1");
  check(clutter_smoothness >= 0, "clutter_smoothness must be non-negative");
  const double side = 2 * std::ceil(max_radius) + 1;
  check(side <= static_cast<double>(std::min(height, width)),
        "targets do not fit inside the image");
}

nlohmann::json SynthConfig::ToJson() const {
  return {{"height", height},
          {"width", width},
          {"min_targets", min_targets},
          {"max_targets", max_targets},
          {"min_radius", min_radius},
          {"max_radius", max_radius},
          {"min_contrast", min_contrast},
          {"max_contrast", max_contrast},
          {"clutter_smoothness", clutter_smoothness},
          {"seed", seed}};
}

SynthConfig SynthConfig::FromJson(const nlohmann::json& json, SynthConfig base) {
  if (!json.is_object()) Fail(Error::Code::kConfig, "synth config must be a JSON object");
  try {
    for (const auto& [key, value] : json.items()) {
      if (key == "height") base.height = value.get<int64_t>();
      else if (key == "width") base.width = value.get<int64_t>();
      else if (key == "min_targets") base.min_targets = value.get<int64_t>();
      else if (key == "max_targets") base.max_targets = value.get<int64_t>();
      else if (key == "min_radius") base.min_radius = value.get<double>();
      else if (key == "max_radius") base.max_radius = value.get<double>();
      else if (key == "min_contrast") base.min_contrast = value.get<double>();
      else if (key == "max_contrast") base.max_contrast = value.get<double>();
      else if (key == "clutter_smoothness") base.clutter_smoothness = value.get<int64_t>();
      else if (key == "seed") base.seed = value.get<uint64_t>();
      else Fail(Error::Code::kConfig, "unknown synth config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(Error::Code::kConfig, std::string("synth config: ") + e.what());
  }
  base.Validate();
  return base;
}

std::vector<double> GenerateBackground(const SynthConfig& config, int64_t index) {
  const int64_t h = config.height, w = config.width;
  Rng rng(MixSeed(MixSeed(config.seed, static_cast<uint64_t>(index)), kBackgroundStream));
  std::vector<double> v(h * w);
  for (double& x : v) x = rng.Uniform();
  for (int64_t i = 0; i < config.clutter_smoothness; ++i) BoxBlur(v, h, w);
  // Rescale clutter to a fixed band, then add a low-frequency ramp.
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double lo_v = *lo, span = std::max(*hi - *lo, 1e-12);
  const double base = rng.Uniform(0.1, 0.3);
  const double gr = rng.Uniform(-0.1, 0.1), gc = rng.Uniform(-0.1, 0.1);
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) {
      const double clutter = 0.25 * (v[r * w + c] - lo_v) / span;
      const double ramp = gr * r / std::max<int64_t>(h - 1, 1) + gc * c / std::max<int64_t>(w - 1, 1);
      v[r * w + c] = std::clamp(base + clutter + ramp + 0.1, 0.0, 1.0);
    }
  }
  return v;
}

Sample GenerateSample(const SynthConfig& config, int64_t index) {
  config.Validate();
  const int64_t h = config.height, w = config.width;
  std::vector<double> v = GenerateBackground(config, index);
  Rng rng(MixSeed(MixSeed(config.seed, static_cast<uint64_t>(index)), kTargetStream));

  struct Target {
    double row, col, radius, contrast;
  };
  std::vector<Target> targets;
  const int64_t wanted =
      config.min_targets +
      static_cast<int64_t>(rng.Below(static_cast<uint64_t>(config.max_targets - config.min_targets + 1)));
  for (int attempt = 0; attempt < 1000 && static_cast<int64_t>(targets.size()) < wanted;
       ++attempt) {
    Target t;
    t.radius = rng.Uniform(config.min_radius, config.max_radius);
    t.contrast = rng.Uniform(config.min_contrast, config.max_contrast);
    const int64_t margin = static_cast<int64_t>(std::ceil(t.radius));
    t.row = static_cast<double>(margin + static_cast<int64_t>(rng.Below(
                                             static_cast<uint64_t>(h - 2 * margin))));
    t.col = static_cast<double>(margin + static_cast<int64_t>(rng.Below(
                                             static_cast<uint64_t>(w - 2 * margin))));
    bool clear = true;
    for (const Target& o : targets) {
      // Masks stay at least two pixels apart so they never merge.
      if (std::hypot(t.row - o.row, t.col - o.col) <= t.radius + o.radius + 2.5) clear = false;
    }
    if (clear) targets.push_back(t);
  }

  Sample s;
  s.id = "synth_" + std::string(5 - std::min<size_t>(5, std::to_string(index).size()), '0') +
         std::to_string(index);
  s.mask = metrics::Mask::Zeros(h, w);
  for (const Target& t : targets) {
    const double sigma = t.radius / 2.0;
    for (int64_t r = 0; r < h; ++r) {
      for (int64_t c = 0; c < w; ++c) {
        const double d2 = (r - t.row) * (r - t.row) + (c - t.col) * (c - t.col);
        if (d2 > 9 * t.radius * t.radius) continue;
        v[r * w + c] += t.contrast * std::exp(-d2 / (2 * sigma * sigma));
        if (d2 <= t.radius * t.radius) s.mask.pixels[r * w + c] = 1;
      }
    }
  }
  s.image = {h, w, std::vector<uint8_t>(h * w)};
  for (int64_t i = 0; i < h * w; ++i) s.image.pixels[i] = ToByte(v[i]);
  return s;
}

void WritePgm(const fs::path& path, const GrayImage& image) {
  Require(static_cast<int64_t>(image.pixels.size()) == image.height * image.width,
          Error::Code::kShape, "image payload does not match its extents");
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(Error::Code::kIo, "cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) Fail(Error::Code::kIo, "failed writing " + path.string());
}

GrayImage ReadPgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(Error::Code::kNotFound, "cannot open " + path.string());
  const std::string magic = ReadToken(in);
  if (magic == "P2") {
    Fail(Error::Code::kIo, "unsupported PGM format P2 (ASCII) in " + path.string() +
                               "; only binary P5 is supported");
  }
  if (magic != "P5") Fail(Error::Code::kIo, "not a binary PGM (P5) file: " + path.string());
  GrayImage image;
  image.width = ParseHeaderInt(ReadToken(in), path, "width");
  image.height = ParseHeaderInt(ReadToken(in), path, "height");
  const int64_t maxval = ParseHeaderInt(ReadToken(in), path, "maxval");
  if (image.width < 1 || image.height < 1) {
    Fail(Error::Code::kIo, "malformed PGM header in " + path.string() + ": empty image");
  }
  if (maxval < 1 || maxval > 255) {
    Fail(Error::Code::kIo, "unsupported PGM maxval " + std::to_string(maxval) + " in " +
                               path.string() + "; only 8-bit images are supported");
  }
  image.pixels.resize(image.height * image.width);
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) {
    Fail(Error::Code::kIo, "truncated PGM payload in " + path.string() + ": expected " +
                               std::to_string(image.pixels.size()) + " bytes, got " +
                               std::to_string(in.gcount()));
  }
  return image;
}

Split SplitIds(std::vector<std::string> ids, double train_fraction, uint64_t seed) {
  if (ids.size() < 2) {
    Fail(Error::Code::kInvalidArgument, "a split needs at least two samples, got " +
                                            std::to_string(ids.size()));
  }
  Require(train_fraction > 0 && train_fraction < 1, Error::Code::kInvalidArgument,
          "train fraction must lie in (0, 1)");
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.Shuffle(ids);
  const int64_t n = static_cast<int64_t>(ids.size());
  const int64_t n_train = std::clamp<int64_t>(
      static_cast<int64_t>(std::floor(static_cast<double>(n) * train_fraction + 1e-9)), 1, n - 1);
  Split split;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.test.assign(ids.begin() + n_train, ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

nlohmann::json Manifest::ToJson() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const ManifestEntry& e : samples) {
    entries.push_back({{"id", e.id}, {"image", e.image}, {"mask", e.mask}});
  }
  return {{"schema", kManifestSchema},
          {"samples", entries},
          {"split", {{"train", split.train}, {"test", split.test}}},
          {"seed", seed}};
}

Manifest Manifest::FromJson(const nlohmann::json& json) {
  Manifest m;
  try {
    for (const auto& e : json.at("samples")) {
      m.samples.push_back({e.at("id").get<std::string>(), e.at("image").get<std::string>(),
                           e.at("mask").get<std::string>()});
    }
    m.split.train = json.at("split").at("train").get<std::vector<std::string>>();
    m.split.test = json.at("split").at("test").get<std::vector<std::string>>();
    m.seed = json.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    Fail(Error::Code::kIo, std::string("malformed dataset manifest: ") + e.what());
  }
  std::set<std::string> known;
  for (const ManifestEntry& e : m.samples) known.insert(e.id);
  for (const auto* list : {&m.split.train, &m.split.test}) {
    for (const std::string& id : *list) {
      if (!known.count(id)) Fail(Error::Code::kIo, "manifest split names unknown id " + id);
    }
  }
  return m;
}

Manifest WriteSyntheticDataset(const fs::path& root, const SynthConfig& config, int64_t count,
                               double train_fraction) {
  config.Validate();
  Require(count >= 2, Error::Code::kInvalidArgument, "a dataset needs at least two samples");
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  fs::create_directories(root / "masks", ec);
  if (ec) Fail(Error::Code::kIo, "cannot create dataset directories under " + root.string());
  Manifest manifest;
  manifest.seed = config.seed;
  std::vector<std::string> ids;
  for (int64_t i = 0; i < count; ++i) {
    Sample s = GenerateSample(config, i);
    GrayImage mask_img{s.mask.height, s.mask.width, s.mask.pixels};
    for (uint8_t& p : mask_img.pixels) p = p ? 255 : 0;
    const std::string image_rel = "images/" + s.id + ".pgm";
    const std::string mask_rel = "masks/" + s.id + ".pgm";
    WritePgm(root / image_rel, s.image);
    WritePgm(root / mask_rel, mask_img);
    manifest.samples.push_back({s.id, image_rel, mask_rel});
    ids.push_back(s.id);
  }
  manifest.split = SplitIds(ids, train_fraction, config.seed);
  std::ofstream out(root / "manifest.json");
  if (!out) Fail(Error::Code::kIo, "cannot write manifest under " + root.string());
  out << manifest.ToJson().dump(2) << '\n';
  return manifest;
}

Manifest OpenDataset(const fs::path& root, uint64_t seed, double train_fraction) {
  if (!fs::is_directory(root)) Fail(Error::Code::kNotFound, "dataset not found: " + root.string());
  const fs::path manifest_path = root / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    nlohmann::json json;
    try {
      in >> json;
    } catch (const nlohmann::json::exception& e) {
      Fail(Error::Code::kIo, "cannot parse " + manifest_path.string() + ": " + e.what());
    }
    return Manifest::FromJson(json);
  }
  if (!fs::is_directory(root / "images") || !fs::is_directory(root / "masks")) {
    Fail(Error::Code::kNotFound, "dataset " + root.string() +
                                     " has no manifest.json and no images/ and masks/ folders");
  }
  std::map<std::string, std::string> masks;
  for (const auto& e : fs::directory_iterator(root / "masks")) {
    if (e.path().extension() == ".pgm") masks[Basename(e.path())] = e.path().filename().string();
  }
  std::map<std::string, std::string> images;
  for (const auto& e : fs::directory_iterator(root / "images")) {
    if (e.path().extension() == ".pgm") images[Basename(e.path())] = e.path().filename().string();
  }
  Manifest m;
  m.seed = seed;
  std::vector<std::string> ids;
  for (const auto& [id, file] : images) {
    auto it = masks.find(id);
    if (it == masks.end()) continue;
    m.samples.push_back({id, "images/" + file, "masks/" + it->second});
    ids.push_back(id);
  }
  if (ids.empty()) Fail(Error::Code::kNotFound, "no image/mask pairs under " + root.string());
  m.split = SplitIds(ids, train_fraction, seed);
  return m;
}

GrayImage ResizeImage(const GrayImage& image, int64_t height, int64_t width, Resize mode) {
  if (mode == Resize::kNone || (height == image.height && width == image.width)) return image;
  GrayImage out{height, width, std::vector<uint8_t>(height * width)};
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int64_t r = 0; r < height; ++r) {
    for (int64_t c = 0; c < width; ++c) {
      if (mode == Resize::kNearest) {
        const int64_t rr = std::min<int64_t>(static_cast<int64_t>((r + 0.5) * sy), image.height - 1);
        const int64_t cc = std::min<int64_t>(static_cast<int64_t>((c + 0.5) * sx), image.width - 1);
        out.pixels[r * width + c] = image.pixels[rr * image.width + cc];
        continue;
      }
      const double y = std::max((r + 0.5) * sy - 0.5, 0.0);
      const double x = std::max((c + 0.5) * sx - 0.5, 0.0);
      const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(y), image.height - 1);
      const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(x), image.width - 1);
      const int64_t y1 = std::min<int64_t>(y0 + 1, image.height - 1);
      const int64_t x1 = std::min<int64_t>(x0 + 1, image.width - 1);
      const double fy = y - y0, fx = x - x0;
      auto px = [&](int64_t yy, int64_t xx) {
        return static_cast<double>(image.pixels[yy * image.width + xx]);
      };
      const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
                       fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
      out.pixels[r * width + c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

metrics::Mask ResizeMask(const metrics::Mask& mask, int64_t height, int64_t width) {
  GrayImage g{mask.height, mask.width, mask.pixels};
  GrayImage r = ResizeImage(g, height, width, Resize::kNearest);
  return {height, width, std::move(r.pixels)};
}

Sample LoadSample(const fs::path& root, const ManifestEntry& entry, const LoadOptions& options) {
  Sample s;
  s.id = entry.id;
  s.image = ReadPgm(root / entry.image);
  GrayImage mask = ReadPgm(root / entry.mask);
  if (mask.height != s.image.height || mask.width != s.image.width) {
    Fail(Error::Code::kShape, "mask and image sizes differ for sample " + entry.id);
  }
  s.mask = {mask.height, mask.width, std::move(mask.pixels)};
  for (uint8_t& p : s.mask.pixels) p = p > 127 ? 1 : 0;
  if (options.size > 0) {
    s.image = ResizeImage(s.image, options.size, options.size, options.image_resize);
    s.mask = ResizeMask(s.mask, options.size, options.size);
  }
  return s;
}

std::vector<Sample> LoadSplit(const fs::path& root, const Manifest& manifest,
                              const std::vector<std::string>& ids, const LoadOptions& options) {
  std::map<std::string, const ManifestEntry*> by_id;
  for (const ManifestEntry& e : manifest.samples) by_id[e.id] = &e;
  std::vector<Sample> out;
  for (const std::string& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) Fail(Error::Code::kNotFound, "sample " + id + " not in manifest");
    out.push_back(LoadSample(root, *it->second, options));
  }
  return out;
}

Tensor ImagesToTensor(const std::vector<const GrayImage*>& images, int64_t channels) {
  Require(!images.empty(), Error::Code::kInvalidArgument, "no images to stack");
  const int64_t h = images[0]->height, w = images[0]->width;
  const int64_t b = static_cast<int64_t>(images.size());
  std::vector<double> v(b * channels * h * w);
  for (int64_t i = 0; i < b; ++i) {
    const GrayImage& img = *images[i];
    if (img.height != h || img.width != w) {
      Fail(Error::Code::kShape, "images in a batch must share one size");
    }
    for (int64_t ch = 0; ch < channels; ++ch) {
      double* dst = v.data() + (i * channels + ch) * h * w;
      for (int64_t p = 0; p < h * w; ++p) dst[p] = img.pixels[p] / 255.0;
    }
  }
  return Tensor::FromData({b, channels, h, w}, std::move(v));
}

Tensor MasksToTensor(const std::vector<const metrics::Mask*>& masks) {
  Require(!masks.empty(), Error::Code::kInvalidArgument, "no masks to stack");
  const int64_t h = masks[0]->height, w = masks[0]->width;
  const int64_t b = static_cast<int64_t>(masks.size());
  std::vector<double> v(b * h * w);
  for (int64_t i = 0; i < b; ++i) {
    if (masks[i]->height != h || masks[i]->width != w) {
      Fail(Error::Code::kShape, "masks in a batch must share one size");
    }
    for (int64_t p = 0; p < h * w; ++p) v[i * h * w + p] = masks[i]->pixels[p] ? 1.0 : 0.0;
  }
  return Tensor::FromData({b, 1, h, w}, std::move(v));
}

}  // namespace mim::data
