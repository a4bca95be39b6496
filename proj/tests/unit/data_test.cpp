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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "data/dataset.h"
#include "test_util.h"

namespace mim::data {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mim_data_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string ReadBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteBytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

TEST_CASE("data: generation is deterministic in seed and index") {
  SynthConfig cfg;
  cfg.seed = 7;
  Sample a = GenerateSample(cfg, 3), b = GenerateSample(cfg, 3);
  CHECK(a.id == b.id);
  CHECK(a.image == b.image);
  CHECK(a.mask.pixels == b.mask.pixels);
  CHECK(GenerateSample(cfg, 4).image != a.image);
  cfg.seed = 8;
  CHECK(GenerateSample(cfg, 3).image != a.image);
}

TEST_CASE("data: single radius-2 target gives one bounded component") {
  SynthConfig cfg;
  cfg.min_targets = cfg.max_targets = 1;
  cfg.min_radius = cfg.max_radius = 2.0;
  const double bound = std::numbers::pi * 16.0;
  for (int64_t i = 0; i < 50; ++i) {
    cfg.seed = static_cast<uint64_t>(i);
    Sample s = GenerateSample(cfg, i);
    auto comps = metrics::ConnectedComponents(s.mask);
    REQUIRE(comps.size() == 1);
    CHECK(static_cast<double>(comps[0].area) <= bound);
  }
}

TEST_CASE("data: every mask has between min and max targets") {
  SynthConfig cfg;
  cfg.seed = 1;
  for (int64_t i = 0; i < 60; ++i) {
    Sample s = GenerateSample(cfg, i);
    CHECK(s.image.height == 64);
    CHECK(s.mask.width == 64);
    const auto n = metrics::ConnectedComponents(s.mask).size();
    CHECK(n >= 1);
    CHECK(n <= 3);
    for (uint8_t v : s.mask.pixels) CHECK(v <= 1);
  }
}

TEST_CASE("data: zero contrast leaves the background untouched") {
  SynthConfig cfg;
  cfg.min_contrast = cfg.max_contrast = 0.0;
  cfg.seed = 3;
  Sample s = GenerateSample(cfg, 2);
  std::vector<double> bg = GenerateBackground(cfg, 2);
  CHECK(s.mask.Count() > 0);
  for (size_t i = 0; i < bg.size(); ++i) {
    CHECK(s.image.pixels[i] == static_cast<uint8_t>(std::lround(bg[i] * 255.0)));
  }
}

TEST_CASE("data: targets are brighter than background") {
  SynthConfig cfg;
  cfg.seed = 4;
  Sample s = GenerateSample(cfg, 0);
  std::vector<double> bg = GenerateBackground(cfg, 0);
  for (size_t i = 0; i < bg.size(); ++i) {
    if (s.mask.pixels[i]) CHECK(s.image.pixels[i] >= static_cast<uint8_t>(std::lround(bg[i] * 255.0)));
  }
}

TEST_CASE("data: invalid synth configs are rejected") {
  SynthConfig cfg;
  cfg.min_targets = 0;
  CHECK_THROWS_AS(cfg.Validate(), Error);
  cfg = SynthConfig{};
  cfg.max_radius = 40;
  CHECK_THROWS_AS(cfg.Validate(), Error);
  cfg = SynthConfig{};
  cfg.min_contrast = 0.9;
  CHECK_THROWS_AS(cfg.Validate(), Error);
  CHECK_THROWS_AS(SynthConfig::FromJson({{"bogus", 1}}, SynthConfig{}), Error);
  SynthConfig back = SynthConfig::FromJson(SynthConfig{}.ToJson(), SynthConfig{});
  CHECK(back.ToJson() == SynthConfig{}.ToJson());
}

TEST_CASE("data: pgm round trip") {
  const fs::path dir = TempDir("pgm");
  Rng rng(1);
  GrayImage img{5, 7, std::vector<uint8_t>(35)};
  for (uint8_t& p : img.pixels) p = static_cast<uint8_t>(rng.Below(256));
  WritePgm(dir / "x.pgm", img);
  CHECK(ReadPgm(dir / "x.pgm") == img);
  fs::remove_all(dir);
}

TEST_CASE("data: pgm bytes are row-major after the header") {
  const fs::path dir = TempDir("layout");
  GrayImage img{2, 2, {1, 2, 3, 4}};
  WritePgm(dir / "x.pgm", img);
  const std::string bytes = ReadBytes(dir / "x.pgm");
  CHECK(bytes == std::string("P5\n2 2\n255\n\x01\x02\x03\x04", 15));
  fs::remove_all(dir);
}

TEST_CASE("data: malformed pgm files are errors") {
  const fs::path dir = TempDir("bad");
  WriteBytes(dir / "ascii.pgm", "P2\n2 2\n255\n1 2 3 4\n");
  try {
    ReadPgm(dir / "ascii.pgm");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Error::Code::kIo);
    CHECK(std::string(e.what()).find("P2") != std::string::npos);
  }
  WriteBytes(dir / "short.pgm", std::string("P5\n4 4\n255\n\x01\x02", 13));
  CHECK_THROWS_AS(ReadPgm(dir / "short.pgm"), Error);
  WriteBytes(dir / "maxval.pgm", std::string("P5\n1 1\n65535\n\x01\x02", 15));
  CHECK_THROWS_AS(ReadPgm(dir / "maxval.pgm"), Error);
  WriteBytes(dir / "garbage.pgm", "hello");
  CHECK_THROWS_AS(ReadPgm(dir / "garbage.pgm"), Error);
  try {
    ReadPgm(dir / "missing.pgm");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Error::Code::kNotFound);
  }
  // Comments in the header are allowed.
  WriteBytes(dir / "comment.pgm", std::string("P5\n# made by hand\n1 2\n255\n\x07\x08", 31));
  GrayImage c = ReadPgm(dir / "comment.pgm");
  CHECK(c.height == 2);
  CHECK(c.pixels == std::vector<uint8_t>{7, 8});
  fs::remove_all(dir);
}

std::vector<std::string> Ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
  return ids;
}

TEST_CASE("data: ten samples split eight to two") {
  Split s = SplitIds(Ids(10), 0.8, 3);
  CHECK(s.train.size() == 8);
  CHECK(s.test.size() == 2);
}

TEST_CASE("data: split is disjoint, exhaustive and seeded") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::string> ids = Ids(13);
    Split s = SplitIds(ids, 0.8, seed);
    std::set<std::string> tr(s.train.begin(), s.train.end()), te(s.test.begin(), s.test.end());
    std::set<std::string> all(ids.begin(), ids.end());
    for (const auto& id : tr) CHECK(te.count(id) == 0);
    std::set<std::string> uni = tr;
    uni.insert(te.begin(), te.end());
    CHECK(uni == all);
    Split again = SplitIds(ids, 0.8, seed);
    CHECK(again.train == s.train);
    // Input order does not matter.
    std::reverse(ids.begin(), ids.end());
    CHECK(SplitIds(ids, 0.8, seed).test == s.test);
  }
  CHECK(SplitIds(Ids(2), 0.99, 0).test.size() == 1);
  CHECK_THROWS_AS(SplitIds(Ids(1), 0.8, 0), Error);
  CHECK_THROWS_AS(SplitIds({}, 0.8, 0), Error);
}

TEST_CASE("data: synthetic dataset on disk") {
  const fs::path dir = TempDir("synth");
  SynthConfig cfg;
  cfg.seed = 9;
  Manifest m = WriteSyntheticDataset(dir, cfg, 5);
  CHECK(m.samples.size() == 5);
  CHECK(m.split.train.size() == 4);
  CHECK(fs::exists(dir / "manifest.json"));
  Manifest reopened = OpenDataset(dir);
  CHECK(reopened.ToJson() == m.ToJson());
  CHECK(reopened.ToJson()["schema"] == "mim.manifest/1");

  // Masks are 0/255 on disk and 0/1 once loaded.
  GrayImage raw = ReadPgm(dir / m.samples[0].mask);
  for (uint8_t v : raw.pixels) CHECK((v == 0 || v == 255));
  Sample loaded = LoadSample(dir, m.samples[0]);
  Sample direct = GenerateSample(cfg, 0);
  CHECK(loaded.image == direct.image);
  CHECK(loaded.mask.pixels == direct.mask.pixels);

  // Without the manifest the directory scan gives the same ids.
  fs::remove(dir / "manifest.json");
  Manifest scanned = OpenDataset(dir, 0);
  CHECK(scanned.samples.size() == 5);
  std::vector<std::string> ids;
  for (const auto& e : scanned.samples) ids.push_back(e.id);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  CHECK(scanned.split.train == SplitIds(ids, 0.8, 0).train);
  fs::remove_all(dir);
}

TEST_CASE("data: missing dataset and unpaired files") {
  try {
    OpenDataset("/nonexistent/mim");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Error::Code::kNotFound);
  }
  const fs::path dir = TempDir("unpaired");
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  WritePgm(dir / "images" / "a.pgm", GrayImage{1, 1, {0}});
  CHECK_THROWS_AS(OpenDataset(dir), Error);
  fs::remove_all(dir);
}

TEST_CASE("data: manifest json validation") {
  Manifest m;
  m.samples = {{"a", "images/a.pgm", "masks/a.pgm"}, {"b", "images/b.pgm", "masks/b.pgm"}};
  m.split = {{"a"}, {"b"}};
  m.seed = 4;
  Manifest back = Manifest::FromJson(m.ToJson());
  CHECK(back.ToJson() == m.ToJson());
  nlohmann::json bad = m.ToJson();
  bad["split"]["test"] = {"zzz"};
  CHECK_THROWS_AS(Manifest::FromJson(bad), Error);
  CHECK_THROWS_AS(Manifest::FromJson(nlohmann::json::object()), Error);
}

TEST_CASE("data: resizing") {
  GrayImage img{2, 2, {0, 100, 200, 255}};
  GrayImage same = ResizeImage(img, 2, 2, Resize::kBilinear);
  CHECK(same == img);
  GrayImage up = ResizeImage(img, 4, 4, Resize::kNearest);
  CHECK(up.pixels[0] == 0);
  CHECK(up.pixels[15] == 255);
  GrayImage flat = ResizeImage(GrayImage{3, 3, std::vector<uint8_t>(9, 77)}, 7, 7, Resize::kBilinear);
  for (uint8_t v : flat.pixels) CHECK(v == 77);
  metrics::Mask mk = metrics::Mask::Zeros(2, 2);
  mk.pixels[3] = 1;
  metrics::Mask big = ResizeMask(mk, 4, 4);
  CHECK(big.Count() == 4);
  CHECK(big.pixels[15] == 1);
}

TEST_CASE("data: tensors from images and masks") {
  GrayImage a{1, 2, {0, 255}}, b{1, 2, {51, 102}};
  Tensor t = ImagesToTensor({&a, &b}, 3);
  CHECK(t.shape() == Shape{2, 3, 1, 2});
  CHECK(t.data()[1] == 1.0);
  CHECK(t.data()[3] == 1.0);  // replicated channel
  CHECK(t.data()[6] == doctest::Approx(0.2));
  metrics::Mask m = metrics::Mask::Zeros(1, 2);
  m.pixels[1] = 1;
  Tensor mt = MasksToTensor({&m});
  CHECK(mt.shape() == Shape{1, 1, 1, 2});
  CHECK(mt.data()[1] == 1.0);
}

}  // namespace
}  // namespace mim::data
