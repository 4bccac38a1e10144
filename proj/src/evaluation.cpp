#include "slap/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "slap/error.hpp"

namespace slap {

const std::array<Rgb, 16> kPalette = {{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
    {245, 130, 48},  {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
    {210, 245, 60},  {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
    {170, 110, 40},  {255, 250, 200}, {128, 0, 0},    {170, 255, 195},
}};

EvalReport report_from_confusion(const Confusion& confusion) {
  if (confusion.rows() != confusion.cols()) throw ContractError("confusion matrix must be square");
  EvalReport r;
  r.confusion = confusion;
  const Eigen::Index c = confusion.rows();
  const auto total = static_cast<double>(confusion.sum());
  r.per_class_accuracy.assign(static_cast<std::size_t>(c), std::numeric_limits<double>::quiet_NaN());
  if (total <= 0.0) return r;
  const auto row_sums = confusion.rowwise().sum();
  const auto col_sums = confusion.colwise().sum();
  double diag = 0.0;
  double chance = 0.0;
  double recall_sum = 0.0;
  int present = 0;
  for (Eigen::Index k = 0; k < c; ++k) {
    diag += static_cast<double>(confusion(k, k));
    chance += static_cast<double>(row_sums(k)) * static_cast<double>(col_sums(k));
    if (row_sums(k) > 0) {
      const double recall = static_cast<double>(confusion(k, k)) / static_cast<double>(row_sums(k));
      r.per_class_accuracy[k] = recall;
      recall_sum += recall;
      ++present;
    }
  }
  r.oa = diag / total;
  r.aa = recall_sum / present;
  const double p_e = chance / (total * total);
  r.kappa = p_e < 1.0 ? (r.oa - p_e) / (1.0 - p_e) : 0.0;
  return r;
}

EvalReport evaluate(const std::vector<int>& predictions, const GroundTruth& gt,
                    const std::vector<std::size_t>& test) {
  if (predictions.size() != gt.labels.size()) {
    throw DataError("expected one prediction per pixel (" + std::to_string(gt.labels.size()) +
                    "), got " + std::to_string(predictions.size()));
  }
  const int c = gt.classes;
  Confusion confusion = Confusion::Zero(c, c);
  for (std::size_t p : test) {
    if (p >= gt.labels.size() || gt.labels[p] <= 0) {
      throw DataError("test pixel " + std::to_string(p) + " is not a labeled pixel");
    }
    if (p >= predictions.size() || predictions[p] < 1 || predictions[p] > c) {
      throw DataError("no valid prediction for test pixel " + std::to_string(p));
    }
    ++confusion(gt.labels[p] - 1, predictions[p] - 1);
  }
  return report_from_confusion(confusion);
}

std::string format_report(const EvalReport& report) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "oa=%.10f\naa=%.10f\nkappa=%.10f\n", report.oa, report.aa,
                report.kappa);
  out += buf;
  for (std::size_t k = 0; k < report.per_class_accuracy.size(); ++k) {
    const double v = report.per_class_accuracy[k];
    if (std::isnan(v)) {
      std::snprintf(buf, sizeof buf, "class_%zu_recall=nan\n", k + 1);
    } else {
      std::snprintf(buf, sizeof buf, "class_%zu_recall=%.10f\n", k + 1, v);
    }
    out += buf;
  }
  out += "# confusion (rows = truth, cols = prediction)\n";
  for (Eigen::Index i = 0; i < report.confusion.rows(); ++i) {
    out += "#";
    for (Eigen::Index j = 0; j < report.confusion.cols(); ++j) {
      out += ' ' + std::to_string(report.confusion(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_report(report);
}

ColorMap render_map(const std::vector<int>& predictions, const GroundTruth& gt) {
  if (predictions.size() != gt.labels.size()) {
    throw DataError("render_map: need one prediction per pixel");
  }
  ColorMap map{gt.height, gt.width, std::vector<Rgb>(gt.labels.size(), Rgb{0, 0, 0}), {}};
  bool wrapped = false;
  for (std::size_t p = 0; p < gt.labels.size(); ++p) {
    if (gt.labels[p] <= 0) continue;
    const int label = predictions[p];
    if (label < 1) {
      throw DataError("render_map: pixel " + std::to_string(p) + " has no predicted class");
    }
    if (label > static_cast<int>(kPalette.size()) && !wrapped) {
      map.warnings.push_back("label " + std::to_string(label) +
                             " exceeds the 16-color palette; colors wrap");
      wrapped = true;
    }
    map.pixels[p] = kPalette[static_cast<std::size_t>(label - 1) % kPalette.size()];
  }
  return map;
}

std::string format_pixmap(const ColorMap& map) {
  std::ostringstream out;
  out << "P3\n" << map.width << ' ' << map.height << "\n255\n";
  for (int r = 0; r < map.height; ++r) {
    for (int c = 0; c < map.width; ++c) {
      const Rgb& px = map.pixels[static_cast<std::size_t>(r) * map.width + c];
      if (c) out << ' ';
      out << int(px[0]) << ' ' << int(px[1]) << ' ' << int(px[2]);
    }
    out << '\n';
  }
  return out.str();
}

void write_pixmap(const std::filesystem::path& path, const ColorMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_pixmap(map);
}

ColorMap parse_pixmap(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int maxval = 0;
  ColorMap map;
  if (!(in >> magic >> map.width >> map.height >> maxval) || magic != "P3" || maxval != 255 ||
      map.width <= 0 || map.height <= 0) {
    throw DataError("not an ASCII P3 pixmap with maxval 255");
  }
  map.pixels.resize(static_cast<std::size_t>(map.width) * map.height);
  for (Rgb& px : map.pixels) {
    for (auto& ch : px) {
      int v = 0;
      if (!(in >> v) || v < 0 || v > 255) throw DataError("truncated or invalid pixmap");
      ch = static_cast<std::uint8_t>(v);
    }
  }
  return map;
}

}  // namespace slap
