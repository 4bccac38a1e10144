#pragma once

// Hyperspectral cube and ground-truth I/O, train/test splitting, the
// candidate-label controlling protocol, and synthetic test scenes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace slap {

/// Raw image: height x width pixels with `bands` spectral values each, stored
/// band-sequential (band-major, then row-major within a band).
struct HsiCube {
  int height = 0;
  int width = 0;
  int bands = 0;
  std::vector<float> data;

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  float at(int band, std::size_t pixel) const { return data[band * pixel_count() + pixel]; }
  float& at(int band, std::size_t pixel) { return data[band * pixel_count() + pixel]; }

  // Throws DataError on a size mismatch or a non-finite value.
  void validate() const;
};

/// Label raster; 0 marks unlabeled pixels, classes are 1..classes.
struct GroundTruth {
  int height = 0;
  int width = 0;
  int classes = 0;
  std::vector<int> labels;

  std::size_t pixel_count() const { return labels.size(); }

  // Builds and validates: classes = max label, each of 1..classes non-empty.
  static GroundTruth from_labels(int height, int width, std::vector<int> labels);
};

struct TrainTestSplit {
  std::vector<std::size_t> train;  // ascending pixel indices
  std::vector<std::size_t> test;
};

struct PartialLabelEntry {
  std::size_t pixel = 0;
  int true_label = 0;           // hidden from the learner; kept for scoring
  std::vector<int> candidates;  // ascending, contains true_label
};

struct PartialLabeledSet {
  std::vector<PartialLabelEntry> entries;
  int r = 0;
  int classes = 0;

  std::size_t size() const { return entries.size(); }
};

HsiCube load_cube(const std::filesystem::path& header_path);

// Writes `<header_path>` and a raw data file next to it named `data_name`.
void write_cube(const HsiCube& cube, const std::filesystem::path& header_path,
                const std::string& data_name);

// Integer raster of `height` rows with `width` values each.
struct LabelRaster {
  int height = 0;
  int width = 0;
  std::vector<int> values;
};
LabelRaster read_label_raster(const std::filesystem::path& path);
LabelRaster parse_label_raster(std::istream& in, const std::string& source_name);
void write_label_raster(const std::filesystem::path& path, int height, int width,
                        const std::vector<int>& values);

GroundTruth load_ground_truth(const std::filesystem::path& path, const HsiCube& cube);

/// Per class k with n_k labeled pixels, max(ceil(percent * n_k), 1) pixels go
/// to train and the rest to test.
TrainTestSplit split_train_test(const GroundTruth& gt, double percent_per_class,
                                std::uint64_t seed);

/// Candidate set = true label plus `r` false labels drawn uniformly without
/// replacement from the other classes.
PartialLabeledSet generate_candidates(const std::vector<std::size_t>& train,
                                      const GroundTruth& gt, int r, std::uint64_t seed);

// `linear_index,true_label,cand1;cand2;...` per line.
void write_candidates(const std::filesystem::path& path, const PartialLabeledSet& set);
PartialLabeledSet read_candidates(const std::filesystem::path& path, int classes);

struct SyntheticScene {
  HsiCube cube;
  GroundTruth gt;
};

/// Rectangular homogeneous class regions; each class gets a random spectrum
/// in [0,1)^bands plus per-pixel Gaussian noise of standard deviation
/// `noise_sigma`.
SyntheticScene generate_synthetic_scene(int height, int width, int bands, int classes,
                                        double noise_sigma, std::uint64_t seed);

}  // namespace slap
