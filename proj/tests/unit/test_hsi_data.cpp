#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "slap/error.hpp"
#include "slap/hsi_data.hpp"
#include "support.hpp"

using namespace slap;
using slap::test::TempDir;

namespace {

void write_raw(const std::filesystem::path& path, const std::vector<float>& values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  slap::test::spit(path, bytes);
}

void write_header(const std::filesystem::path& path, int w, int h, int bands) {
  slap::test::spit(path, "width=" + std::to_string(w) + "\nheight=" + std::to_string(h) +
                             "\nbands=" + std::to_string(bands) +
                             "\ndtype=float32\ninterleave=bsq\nbyteorder=little\ndata=cube.raw\n");
}

GroundTruth striped_gt(int h, int w, int classes) {
  std::vector<int> labels(static_cast<std::size_t>(h) * w);
  for (std::size_t p = 0; p < labels.size(); ++p) labels[p] = static_cast<int>(p % classes) + 1;
  return GroundTruth::from_labels(h, w, labels);
}

}  // namespace

TEST_CASE("load_cube reads a 2x2 single-band cube") {
  TempDir dir("cube");
  write_header(dir / "cube.hdr", 2, 2, 1);
  write_raw(dir / "cube.raw", {1, 2, 3, 4});
  const HsiCube cube = load_cube(dir / "cube.hdr");
  CHECK(cube.height == 2);
  CHECK(cube.width == 2);
  CHECK(cube.bands == 1);
  CHECK(cube.data == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("load_cube rejects a size mismatch") {
  TempDir dir("cube");
  write_header(dir / "cube.hdr", 5, 1, 1);
  write_raw(dir / "cube.raw", {1, 2, 3, 4});
  CHECK_THROWS_AS(load_cube(dir / "cube.hdr"), DataError);
}

TEST_CASE("load_cube rejects non-finite values and bad header values") {
  TempDir dir("cube");
  write_header(dir / "cube.hdr", 2, 1, 1);
  write_raw(dir / "cube.raw", {1, std::numeric_limits<float>::quiet_NaN()});
  CHECK_THROWS_AS(load_cube(dir / "cube.hdr"), DataError);

  slap::test::spit(dir / "bad.hdr", "width=2\nheight=1\nbands=1\ndtype=float64\ninterleave=bsq\nbyteorder=little\ndata=cube.raw\n");
  CHECK_THROWS_AS(load_cube(dir / "bad.hdr"), DataError);
  slap::test::spit(dir / "dup.hdr", "width=2\nwidth=2\n");
  CHECK_THROWS_AS(load_cube(dir / "dup.hdr"), DataError);
  CHECK_THROWS_AS(load_cube(dir / "missing.hdr"), DataError);
}

TEST_CASE("write_cube then load_cube is bit-exact") {
  TempDir dir("cube");
  Rng rng(3);
  HsiCube cube{3, 5, 7, {}};
  cube.data.resize(3 * 5 * 7);
  for (auto& v : cube.data) v = static_cast<float>(rng.normal() * 1e3);
  cube.data[4] = -0.0f;
  cube.data[9] = std::numeric_limits<float>::denorm_min();
  write_cube(cube, dir / "c.hdr", "c.raw");
  const HsiCube back = load_cube(dir / "c.hdr");
  REQUIRE(back.data.size() == cube.data.size());
  CHECK(std::memcmp(back.data.data(), cube.data.data(), cube.data.size() * 4) == 0);
  CHECK(back.bands == 7);
}

TEST_CASE("ground truth parsing and validation") {
  std::istringstream in("0 1\n2 1\n");
  const LabelRaster raster = parse_label_raster(in, "gt");
  const GroundTruth gt = GroundTruth::from_labels(raster.height, raster.width, raster.values);
  CHECK(gt.labels == std::vector<int>{0, 1, 2, 1});
  CHECK(gt.classes == 2);

  // Label 3 present but class 2 empty.
  CHECK_THROWS_AS(GroundTruth::from_labels(2, 2, {0, 1, 3, 1}), DataError);
  CHECK_THROWS_AS(GroundTruth::from_labels(1, 2, {-1, 1}), DataError);

  std::istringstream ragged("1 2\n1\n");
  CHECK_THROWS_AS(parse_label_raster(ragged, "gt"), DataError);
}

TEST_CASE("load_ground_truth checks dimensions against the cube") {
  TempDir dir("gt");
  write_label_raster(dir / "gt.txt", 3, 3, {1, 1, 1, 1, 1, 1, 1, 1, 1});
  HsiCube cube{2, 2, 1, {0, 0, 0, 0}};
  CHECK_THROWS_AS(load_ground_truth(dir / "gt.txt", cube), DataError);
  write_label_raster(dir / "ok.txt", 2, 2, {0, 1, 2, 2});
  const GroundTruth gt = load_ground_truth(dir / "ok.txt", cube);
  CHECK(gt.classes == 2);
}

TEST_CASE("split_train_test uses the ceil rule with a minimum of one") {
  // Class 1: 100 pixels, class 2: 10 pixels.
  std::vector<int> labels(110, 1);
  std::fill(labels.begin() + 100, labels.end(), 2);
  const GroundTruth gt = GroundTruth::from_labels(1, 110, labels);
  const TrainTestSplit s5 = split_train_test(gt, 0.05, 1);
  std::map<int, int> train_count, test_count;
  for (auto p : s5.train) ++train_count[gt.labels[p]];
  for (auto p : s5.test) ++test_count[gt.labels[p]];
  CHECK(train_count[1] == 5);
  CHECK(test_count[1] == 95);
  CHECK(train_count[2] == 1);

  const TrainTestSplit s1 = split_train_test(gt, 0.01, 1);
  train_count.clear();
  for (auto p : s1.train) ++train_count[gt.labels[p]];
  CHECK(train_count[1] == 1);
  CHECK(train_count[2] == 1);
}

TEST_CASE("split_train_test is deterministic, disjoint and covers every labeled pixel") {
  const GroundTruth gt = GroundTruth::from_labels(4, 5, {0, 1, 1, 2, 2, 1, 1, 2, 2, 0, 3, 3, 3, 1, 2,
                                                         0, 3, 1, 2, 3});
  const TrainTestSplit a = split_train_test(gt, 0.3, 42);
  const TrainTestSplit b = split_train_test(gt, 0.3, 42);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(std::is_sorted(a.train.begin(), a.train.end()));
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (auto p : a.test) CHECK(all.insert(p).second);
  std::size_t labeled = 0;
  for (int l : gt.labels) labeled += l > 0;
  CHECK(all.size() == labeled);
  CHECK_FALSE(all.count(0));

  CHECK_THROWS_AS(split_train_test(gt, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_train_test(gt, 1.0, 1), ConfigError);
}

TEST_CASE("generate_candidates honours the controlling protocol") {
  const GroundTruth gt = striped_gt(8, 8, 16);
  std::vector<std::size_t> train(64);
  for (std::size_t i = 0; i < train.size(); ++i) train[i] = i;

  SUBCASE("r = 0") {
    const auto set = generate_candidates(train, gt, 0, 5);
    for (const auto& e : set.entries) CHECK(e.candidates == std::vector<int>{e.true_label});
  }
  SUBCASE("r = 1, c = 16") {
    const auto set = generate_candidates(train, gt, 1, 5);
    for (const auto& e : set.entries) {
      CHECK(e.candidates.size() == 2);
      CHECK(std::count(e.candidates.begin(), e.candidates.end(), e.true_label) == 1);
      CHECK(e.candidates[0] < e.candidates[1]);
      CHECK(e.true_label == gt.labels[e.pixel]);
    }
  }
  SUBCASE("r = c - 1 gives the full label set") {
    const auto set = generate_candidates(train, gt, 15, 5);
    std::vector<int> all(16);
    for (int k = 0; k < 16; ++k) all[k] = k + 1;
    for (const auto& e : set.entries) CHECK(e.candidates == all);
  }
  SUBCASE("out-of-range r") {
    CHECK_THROWS_AS(generate_candidates(train, gt, 16, 5), ConfigError);
    CHECK_THROWS_AS(generate_candidates(train, gt, -1, 5), ConfigError);
  }
}

TEST_CASE("false candidates are spread over the other classes") {
  const GroundTruth gt = striped_gt(40, 50, 4);
  std::vector<std::size_t> train(gt.pixel_count());
  for (std::size_t i = 0; i < train.size(); ++i) train[i] = i;
  const auto set = generate_candidates(train, gt, 1, 9);
  std::map<std::pair<int, int>, int> counts;
  for (const auto& e : set.entries) {
    for (int c : e.candidates) {
      if (c != e.true_label) ++counts[{e.true_label, c}];
    }
  }
  // 500 pixels per class, each false label expected 500/3 times.
  for (const auto& [key, n] : counts) CHECK(std::abs(n - 500.0 / 3.0) < 50.0);
  CHECK(counts.size() == 12);
}

TEST_CASE("candidate files round-trip") {
  TempDir dir("cand");
  const GroundTruth gt = striped_gt(4, 4, 5);
  const auto set = generate_candidates({0, 3, 7, 12}, gt, 2, 1);
  write_candidates(dir / "c.csv", set);
  const auto back = read_candidates(dir / "c.csv", 5);
  REQUIRE(back.size() == set.size());
  CHECK(back.r == 2);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(back.entries[i].pixel == set.entries[i].pixel);
    CHECK(back.entries[i].true_label == set.entries[i].true_label);
    CHECK(back.entries[i].candidates == set.entries[i].candidates);
  }
  slap::test::spit(dir / "bad.csv", "0,1,1;1\n");
  CHECK_THROWS_AS(read_candidates(dir / "bad.csv", 5), DataError);
}

TEST_CASE("synthetic scene without noise has identical class spectra") {
  const SyntheticScene s = generate_synthetic_scene(12, 10, 5, 3, 0.0, 4);
  CHECK(s.gt.classes == 3);
  std::map<int, std::vector<float>> first;
  const std::size_t n = s.cube.pixel_count();
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<float> v(5);
    for (int b = 0; b < 5; ++b) v[b] = s.cube.at(b, p);
    auto [it, fresh] = first.emplace(s.gt.labels[p], v);
    if (!fresh) CHECK(it->second == v);
  }
  CHECK(first.size() == 3);
}

TEST_CASE("synthetic scene with one class is uniform") {
  const SyntheticScene s = generate_synthetic_scene(6, 7, 3, 1, 0.1, 4);
  CHECK(std::all_of(s.gt.labels.begin(), s.gt.labels.end(), [](int l) { return l == 1; }));
}

TEST_CASE("synthetic within-class variance matches the noise level") {
  const double sigma = 0.05;
  const SyntheticScene s = generate_synthetic_scene(32, 32, 16, 4, sigma, 123);
  CHECK(s.gt.classes == 4);
  const std::size_t n = s.cube.pixel_count();
  double ratio_sum = 0.0;
  int groups = 0;
  for (int k = 1; k <= 4; ++k) {
    for (int b = 0; b < 16; ++b) {
      double sum = 0.0, sq = 0.0;
      int count = 0;
      for (std::size_t p = 0; p < n; ++p) {
        if (s.gt.labels[p] != k) continue;
        const double v = s.cube.at(b, p);
        sum += v;
        sq += v * v;
        ++count;
      }
      REQUIRE(count > 1);
      const double mean = sum / count;
      const double var = (sq - count * mean * mean) / (count - 1);
      const double ratio = var / (sigma * sigma);
      CHECK(ratio == doctest::Approx(1.0).epsilon(0.4));
      ratio_sum += ratio;
      ++groups;
    }
  }
  CHECK(ratio_sum / groups == doctest::Approx(1.0).epsilon(0.05));
}
