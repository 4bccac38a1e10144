#pragma once

// Superpixel segmentation and grouping of cube pixels into per-superpixel
// matrices.

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "slap/hsi_data.hpp"

namespace slap {

/// Per-pixel feature vectors used by the segmenter, pixel-major
/// (`channels` consecutive values per pixel).
struct FeatureRaster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  const double* pixel(std::size_t p) const { return values.data() + p * channels; }
};

struct Segmentation {
  int height = 0;
  int width = 0;
  int count = 0;            // K, superpixels actually produced
  std::vector<int> labels;  // 0..count-1, row-major
};

struct PixelCoord {
  int row = 0;
  int col = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// One superpixel: the d x n_i matrix of its pixel spectra, columns in
/// row-major scan order.
struct SuperpixelBlock {
  int index = 0;
  Eigen::MatrixXd X;
  std::vector<PixelCoord> coords;

  int size() const { return static_cast<int>(coords.size()); }
};

/// Where a pixel lives: superpixel index and its column inside that block.
struct BlockRef {
  int superpixel = 0;
  int column = 0;
};

struct PixelGrouping {
  std::vector<SuperpixelBlock> blocks;
  std::vector<BlockRef> locate;  // indexed by linear pixel index
};

struct SegmentOptions {
  double compactness = 0.1;  // weight of grid-normalized spatial distance
  int iterations = 10;
};

// Projection of every pixel onto the first principal component of the
// pixel x band matrix (mean-centred, unnormalized). Sign fixed so the
// largest-magnitude loading is positive.
std::vector<double> first_principal_component(const HsiCube& cube);

/// First principal component min-max normalized to [0, 1]; a cube with no
/// spectral variance maps to a uniform 0.5 raster.
FeatureRaster compute_base_image(const HsiCube& cube);

/// Full spectra, each band min-max normalized over the image. Alternative
/// segmenter input.
FeatureRaster compute_spectral_features(const HsiCube& cube);

/// SLIC-style local k-means on (features, row, col) seeded from a regular
/// grid, followed by connectivity enforcement. Labels are renumbered in
/// row-major order of first appearance.
Segmentation segment(const FeatureRaster& base, int k_target, const SegmentOptions& options = {});

// Throws DataError if labels are out of range, a label is missing, or a
// superpixel is not 4-connected.
void validate_segmentation(const Segmentation& seg);

Segmentation segmentation_from_raster(const LabelRaster& raster);
void write_segmentation(const std::filesystem::path& path, const Segmentation& seg);

PixelGrouping group_pixels(const HsiCube& cube, const Segmentation& seg);

}  // namespace slap
