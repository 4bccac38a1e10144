#include "slap/hsi_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "slap/error.hpp"
#include "slap/key_value.hpp"
#include "slap/rng.hpp"

namespace slap {

namespace {

int parse_positive_int(const KeyValues& kv, const std::string& key, const std::string& source) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw DataError(source + ": missing '" + key + "'");
  try {
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used != it->second.size() || v <= 0 || v > (1L << 30)) throw std::invalid_argument("");
    return static_cast<int>(v);
  } catch (const std::logic_error&) {
    throw DataError(source + ": '" + key + "' must be a positive integer, got '" + it->second + "'");
  }
}

void expect_value(const KeyValues& kv, const std::string& key, const std::string& want,
                  const std::string& source) {
  const auto it = kv.find(key);
  if (it != kv.end() && it->second != want) {
    throw DataError(source + ": unsupported " + key + "='" + it->second + "' (need " + want + ")");
  }
}

}  // namespace

void HsiCube::validate() const {
  if (height <= 0 || width <= 0 || bands <= 0) throw DataError("cube dimensions must be positive");
  const std::size_t want = pixel_count() * static_cast<std::size_t>(bands);
  if (data.size() != want) {
    throw DataError("cube holds " + std::to_string(data.size()) + " values, expected " +
                    std::to_string(want));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw DataError("non-finite cube value at offset " + std::to_string(i));
    }
  }
}

GroundTruth GroundTruth::from_labels(int height, int width, std::vector<int> labels) {
  if (height <= 0 || width <= 0) throw DataError("ground truth dimensions must be positive");
  if (labels.size() != static_cast<std::size_t>(height) * width) {
    throw DataError("ground truth size does not match its dimensions");
  }
  int classes = 0;
  for (int v : labels) {
    if (v < 0) throw DataError("negative label " + std::to_string(v) + " in ground truth");
    classes = std::max(classes, v);
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes) + 1, 0);
  for (int v : labels) ++counts[v];
  for (int k = 1; k <= classes; ++k) {
    if (counts[k] == 0) {
      throw DataError("class " + std::to_string(k) + " has no pixels (classes must be 1.." +
                      std::to_string(classes) + " without gaps)");
    }
  }
  GroundTruth gt;
  gt.height = height;
  gt.width = width;
  gt.classes = classes;
  gt.labels = std::move(labels);
  return gt;
}

HsiCube load_cube(const std::filesystem::path& header_path) {
  const std::string source = header_path.string();
  const KeyValues kv = read_key_values(header_path);
  expect_value(kv, "dtype", "float32", source);
  expect_value(kv, "interleave", "bsq", source);
  expect_value(kv, "byteorder", "little", source);
  HsiCube cube;
  cube.width = parse_positive_int(kv, "width", source);
  cube.height = parse_positive_int(kv, "height", source);
  cube.bands = parse_positive_int(kv, "bands", source);
  const auto data_it = kv.find("data");
  if (data_it == kv.end()) throw DataError(source + ": missing 'data'");
  const std::filesystem::path data_path = header_path.parent_path() / data_it->second;

  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw DataError("cannot open cube data " + data_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t want = cube.pixel_count() * static_cast<std::size_t>(cube.bands);
  if (bytes.size() != want * 4) {
    throw DataError(data_path.string() + ": holds " + std::to_string(bytes.size()) +
                    " bytes, header declares " + std::to_string(want) + " float32 values");
  }
  cube.data.resize(want);
  for (std::size_t i = 0; i < want; ++i) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) {
      bits = (bits << 8) | static_cast<unsigned char>(bytes[4 * i + b]);
    }
    cube.data[i] = std::bit_cast<float>(bits);
    if (!std::isfinite(cube.data[i])) {
      throw DataError(data_path.string() + ": non-finite value at offset " + std::to_string(i));
    }
  }
  return cube;
}

void write_cube(const HsiCube& cube, const std::filesystem::path& header_path,
                const std::string& data_name) {
  cube.validate();
  {
    std::ofstream h(header_path);
    if (!h) throw DataError("cannot write " + header_path.string());
    h << "width=" << cube.width << "\nheight=" << cube.height << "\nbands=" << cube.bands
      << "\ndtype=float32\ninterleave=bsq\nbyteorder=little\ndata=" << data_name << "\n";
  }
  const auto data_path = header_path.parent_path() / data_name;
  std::vector<char> bytes(cube.data.size() * 4);
  for (std::size_t i = 0; i < cube.data.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(cube.data[i]);
    for (int b = 0; b < 4; ++b) {
      bytes[4 * i + b] = static_cast<char>(bits & 0xffu);
      bits >>= 8;
    }
  }
  std::ofstream d(data_path, std::ios::binary);
  if (!d) throw DataError("cannot write " + data_path.string());
  d.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

LabelRaster parse_label_raster(std::istream& in, const std::string& source_name) {
  LabelRaster raster;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream row(line);
    int count = 0;
    std::string token;
    while (row >> token) {
      try {
        std::size_t used = 0;
        const int v = std::stoi(token, &used);
        if (used != token.size()) throw std::invalid_argument("");
        raster.values.push_back(v);
      } catch (const std::logic_error&) {
        throw DataError(source_name + ": invalid integer '" + token + "'");
      }
      ++count;
    }
    if (raster.height == 0) {
      raster.width = count;
    } else if (count != raster.width) {
      throw DataError(source_name + ": row " + std::to_string(raster.height + 1) + " has " +
                      std::to_string(count) + " values, expected " + std::to_string(raster.width));
    }
    ++raster.height;
  }
  if (raster.height == 0) throw DataError(source_name + ": empty raster");
  return raster;
}

LabelRaster read_label_raster(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_label_raster(in, path.string());
}

void write_label_raster(const std::filesystem::path& path, int height, int width,
                        const std::vector<int>& values) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (c) out << ' ';
      out << values[static_cast<std::size_t>(r) * width + c];
    }
    out << '\n';
  }
}

GroundTruth load_ground_truth(const std::filesystem::path& path, const HsiCube& cube) {
  LabelRaster raster = read_label_raster(path);
  if (raster.height != cube.height || raster.width != cube.width) {
    throw DataError(path.string() + ": ground truth is " + std::to_string(raster.height) + "x" +
                    std::to_string(raster.width) + " but the cube is " +
                    std::to_string(cube.height) + "x" + std::to_string(cube.width));
  }
  return GroundTruth::from_labels(raster.height, raster.width, std::move(raster.values));
}

TrainTestSplit split_train_test(const GroundTruth& gt, double percent_per_class,
                                std::uint64_t seed) {
  if (!(percent_per_class > 0.0 && percent_per_class < 1.0)) {
    throw ConfigError("training percentage must lie in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_class(gt.classes + 1);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (gt.labels[i] > 0) by_class[gt.labels[i]].push_back(i);
  }
  Rng rng(seed);
  TrainTestSplit split;
  for (int k = 1; k <= gt.classes; ++k) {
    auto& members = by_class[k];
    if (members.size() < 2) {
      throw DataError("class " + std::to_string(k) + " has fewer than 2 labeled pixels");
    }
    const auto n = static_cast<double>(members.size());
    const auto n_train = std::max<std::size_t>(
        static_cast<std::size_t>(std::ceil(percent_per_class * n - 1e-9)), 1);
    rng.shuffle(std::span<std::size_t>(members));
    split.train.insert(split.train.end(), members.begin(), members.begin() + n_train);
    split.test.insert(split.test.end(), members.begin() + n_train, members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

PartialLabeledSet generate_candidates(const std::vector<std::size_t>& train,
                                      const GroundTruth& gt, int r, std::uint64_t seed) {
  if (r < 0 || r >= gt.classes) {
    throw ConfigError("r must satisfy 0 <= r <= c-1 (c = " + std::to_string(gt.classes) +
                      "), got " + std::to_string(r));
  }
  Rng rng(seed);
  PartialLabeledSet set;
  set.r = r;
  set.classes = gt.classes;
  set.entries.reserve(train.size());
  std::vector<int> others;
  for (std::size_t pixel : train) {
    if (pixel >= gt.labels.size() || gt.labels[pixel] <= 0) {
      throw DataError("training pixel " + std::to_string(pixel) + " is not labeled");
    }
    const int truth = gt.labels[pixel];
    others.clear();
    for (int k = 1; k <= gt.classes; ++k) {
      if (k != truth) others.push_back(k);
    }
    // Partial Fisher-Yates: the first r slots become a uniform r-subset.
    for (int i = 0; i < r; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(others.size() - i));
      std::swap(others[i], others[j]);
    }
    PartialLabelEntry entry{pixel, truth, {truth}};
    entry.candidates.insert(entry.candidates.end(), others.begin(), others.begin() + r);
    std::sort(entry.candidates.begin(), entry.candidates.end());
    set.entries.push_back(std::move(entry));
  }
  return set;
}

void write_candidates(const std::filesystem::path& path, const PartialLabeledSet& set) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : set.entries) {
    out << e.pixel << ',' << e.true_label << ',';
    for (std::size_t i = 0; i < e.candidates.size(); ++i) {
      if (i) out << ';';
      out << e.candidates[i];
    }
    out << '\n';
  }
}

PartialLabeledSet read_candidates(const std::filesystem::path& path, int classes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  PartialLabeledSet set;
  set.classes = classes;
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::istringstream row(line);
    std::string pixel_s, truth_s, cands_s;
    if (!std::getline(row, pixel_s, ',') || !std::getline(row, truth_s, ',') ||
        !std::getline(row, cands_s, ',')) {
      throw DataError(where + ": expected index,true_label,candidates");
    }
    PartialLabelEntry e;
    try {
      e.pixel = std::stoull(pixel_s);
      e.true_label = std::stoi(truth_s);
      std::istringstream cs(cands_s);
      std::string tok;
      while (std::getline(cs, tok, ';')) e.candidates.push_back(std::stoi(tok));
    } catch (const std::logic_error&) {
      throw DataError(where + ": malformed number");
    }
    std::sort(e.candidates.begin(), e.candidates.end());
    if (e.candidates.empty() || e.candidates.front() < 1 || e.candidates.back() > classes ||
        std::adjacent_find(e.candidates.begin(), e.candidates.end()) != e.candidates.end()) {
      throw DataError(where + ": candidate labels must be distinct values in 1.." +
                      std::to_string(classes));
    }
    const int r = static_cast<int>(e.candidates.size()) - 1;
    if (first) {
      set.r = r;
      first = false;
    } else if (r != set.r) {
      throw DataError(where + ": candidate set size differs from earlier lines");
    }
    set.entries.push_back(std::move(e));
  }
  return set;
}

SyntheticScene generate_synthetic_scene(int height, int width, int bands, int classes,
                                        double noise_sigma, std::uint64_t seed) {
  if (height <= 0 || width <= 0 || bands < 1 || classes < 1) {
    throw ConfigError("synthetic scene needs positive height, width, bands and classes");
  }
  if (static_cast<long>(classes) > static_cast<long>(height) * width) {
    throw ConfigError("synthetic scene cannot hold more classes than pixels");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");

  // Horizontal strips, each cut into side-by-side rectangles.
  const int strip_min = (classes + width - 1) / width;
  const int strips = std::max(strip_min, std::min(static_cast<int>(std::sqrt(classes)), height));
  std::vector<int> labels(static_cast<std::size_t>(height) * width, 0);
  int next_class = 1;
  for (int s = 0; s < strips; ++s) {
    const int in_strip = classes / strips + (s < classes % strips ? 1 : 0);
    const int r0 = s * height / strips;
    const int r1 = (s + 1) * height / strips;
    for (int j = 0; j < in_strip; ++j) {
      const int c0 = j * width / in_strip;
      const int c1 = (j + 1) * width / in_strip;
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) labels[static_cast<std::size_t>(r) * width + c] = next_class;
      }
      ++next_class;
    }
  }

  Rng rng(seed);
  std::vector<double> spectra(static_cast<std::size_t>(classes) * bands);
  for (double& v : spectra) v = rng.uniform();

  SyntheticScene scene;
  scene.cube.height = height;
  scene.cube.width = width;
  scene.cube.bands = bands;
  scene.cube.data.resize(scene.cube.pixel_count() * bands);
  for (int b = 0; b < bands; ++b) {
    for (std::size_t p = 0; p < scene.cube.pixel_count(); ++p) {
      const double clean = spectra[static_cast<std::size_t>(labels[p] - 1) * bands + b];
      const double noise = noise_sigma > 0.0 ? noise_sigma * rng.normal() : 0.0;
      scene.cube.at(b, p) = static_cast<float>(clean + noise);
    }
  }
  scene.gt = GroundTruth::from_labels(height, width, std::move(labels));
  return scene;
}

}  // namespace slap
