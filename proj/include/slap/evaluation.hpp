#pragma once

// Accuracy metrics and classification maps.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slap/hsi_data.hpp"

namespace slap {

using Confusion = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct EvalReport {
  Confusion confusion;  // rows = truth, cols = prediction
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
  // Recall per class; NaN for classes without test pixels.
  std::vector<double> per_class_accuracy;
};

/// Metrics from a confusion matrix. AA averages only classes with test
/// pixels; kappa is 0 when chance agreement is 1.
EvalReport report_from_confusion(const Confusion& confusion);

/// Confusion over the test pixels. `predictions` holds one label per image
/// pixel. Throws DataError when a test pixel has no prediction in 1..c.
EvalReport evaluate(const std::vector<int>& predictions, const GroundTruth& gt,
                    const std::vector<std::size_t>& test);

// `key=value` lines (oa, aa, kappa, class_<k>_recall) then the confusion
// table. Fixed formatting so identical reports are byte-identical.
std::string format_report(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);

using Rgb = std::array<std::uint8_t, 3>;

// Class k is drawn with kPalette[(k - 1) % 16]; unlabeled pixels are black.
extern const std::array<Rgb, 16> kPalette;

struct ColorMap {
  int height = 0;
  int width = 0;
  std::vector<Rgb> pixels;
  std::vector<std::string> warnings;
};

/// Colors each labeled (ground truth > 0) pixel by its predicted class.
ColorMap render_map(const std::vector<int>& predictions, const GroundTruth& gt);

// Plain ASCII pixmap (P3, maxval 255).
std::string format_pixmap(const ColorMap& map);
void write_pixmap(const std::filesystem::path& path, const ColorMap& map);
ColorMap parse_pixmap(const std::string& text);

}  // namespace slap
