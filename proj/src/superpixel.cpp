#include "slap/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "slap/error.hpp"
#include "slap/simd/kernels.hpp"

namespace slap {

namespace {

constexpr int kDr[4] = {-1, 1, 0, 0};
constexpr int kDc[4] = {0, 0, -1, 1};

// 4-connected components of equal labels. Returns the component id per pixel
// and the number of components.
int label_components(int height, int width, const std::vector<int>& labels,
                     std::vector<int>& component) {
  component.assign(labels.size(), -1);
  std::vector<std::size_t> stack;
  int next = 0;
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if (component[start] >= 0) continue;
    component[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int r = static_cast<int>(p / width);
      const int c = static_cast<int>(p % width);
      for (int k = 0; k < 4; ++k) {
        const int rr = r + kDr[k];
        const int cc = c + kDc[k];
        if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
        const std::size_t q = static_cast<std::size_t>(rr) * width + cc;
        if (component[q] < 0 && labels[q] == labels[p]) {
          component[q] = next;
          stack.push_back(q);
        }
      }
    }
    ++next;
  }
  return next;
}

// Keeps the largest component of each label; every other component is merged
// into the largest kept component it touches, repeated until none remain.
void enforce_connectivity(int height, int width, std::vector<int>& labels) {
  std::vector<int> component;
  const int n_comp = label_components(height, width, labels, component);
  std::vector<std::size_t> comp_size(n_comp, 0);
  std::vector<int> comp_label(n_comp, 0);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    ++comp_size[component[p]];
    comp_label[component[p]] = labels[p];
  }
  const int n_labels = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> main_comp(n_labels, -1);
  for (int c = 0; c < n_comp; ++c) {
    int& m = main_comp[comp_label[c]];
    if (m < 0 || comp_size[c] > comp_size[m]) m = c;
  }
  // owner[c]: the kept component that absorbs c (itself when kept).
  std::vector<int> owner(n_comp, -1);
  for (int m : main_comp) {
    if (m >= 0) owner[m] = m;
  }
  std::vector<std::size_t> owner_size(comp_size);
  bool pending = true;
  while (pending) {
    pending = false;
    std::vector<int> best(n_comp, -1);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const int c = component[p];
      if (owner[c] >= 0) continue;
      const int r = static_cast<int>(p / width);
      const int col = static_cast<int>(p % width);
      for (int k = 0; k < 4; ++k) {
        const int rr = r + kDr[k];
        const int cc = col + kDc[k];
        if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
        const int o = owner[component[static_cast<std::size_t>(rr) * width + cc]];
        if (o < 0) continue;
        int& b = best[c];
        if (b < 0 || owner_size[o] > owner_size[b] || (owner_size[o] == owner_size[b] && o < b)) {
          b = o;
        }
      }
    }
    for (int c = 0; c < n_comp; ++c) {
      if (owner[c] >= 0) continue;
      if (best[c] >= 0) {
        owner[c] = best[c];
        owner_size[best[c]] += comp_size[c];
      } else {
        pending = true;
      }
    }
  }
  for (std::size_t p = 0; p < labels.size(); ++p) labels[p] = comp_label[owner[component[p]]];
}

void renumber_by_first_appearance(std::vector<int>& labels, int& count) {
  const int n = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> remap(n, -1);
  count = 0;
  for (int& v : labels) {
    if (remap[v] < 0) remap[v] = count++;
    v = remap[v];
  }
}

}  // namespace

std::vector<double> first_principal_component(const HsiCube& cube) {
  const auto n = static_cast<Eigen::Index>(cube.pixel_count());
  const Eigen::Index d = cube.bands;
  Eigen::MatrixXd data(n, d);
  for (Eigen::Index b = 0; b < d; ++b) {
    for (Eigen::Index p = 0; p < n; ++p) data(p, b) = cube.at(static_cast<int>(b), p);
  }
  data.rowwise() -= data.colwise().mean();
  const Eigen::MatrixXd cov = (data.transpose() * data) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::VectorXd axis = eig.eigenvectors().col(d - 1);
  Eigen::Index arg = 0;
  axis.cwiseAbs().maxCoeff(&arg);
  if (axis(arg) < 0) axis = -axis;
  const Eigen::VectorXd proj = data * axis;
  return {proj.data(), proj.data() + proj.size()};
}

FeatureRaster compute_base_image(const HsiCube& cube) {
  if (cube.bands < 1) throw DataError("cube has no bands");
  const std::vector<double> proj = first_principal_component(cube);
  FeatureRaster out{cube.height, cube.width, 1, std::vector<double>(proj.size(), 0.5)};
  const auto [lo, hi] = std::minmax_element(proj.begin(), proj.end());
  const double range = *hi - *lo;
  // Relative cutoff: a constant cube leaves only rounding noise in `proj`.
  double scale = 0.0;
  for (float v : cube.data) scale = std::max(scale, std::fabs(static_cast<double>(v)));
  if (range > 1e-12 * std::max(scale, 1e-300)) {
    for (std::size_t i = 0; i < proj.size(); ++i) out.values[i] = (proj[i] - *lo) / range;
  }
  return out;
}

FeatureRaster compute_spectral_features(const HsiCube& cube) {
  const std::size_t n = cube.pixel_count();
  FeatureRaster out{cube.height, cube.width, cube.bands, std::vector<double>(n * cube.bands, 0.0)};
  for (int b = 0; b < cube.bands; ++b) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t p = 0; p < n; ++p) {
      lo = std::min<double>(lo, cube.at(b, p));
      hi = std::max<double>(hi, cube.at(b, p));
    }
    const double range = hi - lo;
    for (std::size_t p = 0; p < n; ++p) {
      out.values[p * cube.bands + b] = range > 0.0 ? (cube.at(b, p) - lo) / range : 0.5;
    }
  }
  return out;
}

Segmentation segment(const FeatureRaster& base, int k_target, const SegmentOptions& options) {
  const int height = base.height;
  const int width = base.width;
  const long n_pixels = static_cast<long>(height) * width;
  if (k_target < 1 || k_target > n_pixels) {
    throw ConfigError("superpixel count must lie in 1.." + std::to_string(n_pixels) + ", got " +
                      std::to_string(k_target));
  }
  if (options.compactness < 0.0 || options.iterations < 1) {
    throw ConfigError("segmenter needs compactness >= 0 and iterations >= 1");
  }
  const int ch = base.channels;

  int nx = std::clamp(static_cast<int>(std::lround(std::sqrt(double(k_target) * width / height))),
                      1, width);
  int ny = std::clamp(static_cast<int>(std::lround(double(k_target) / nx)), 1, height);
  const double step = std::sqrt(double(n_pixels) / k_target);
  const int window = static_cast<int>(std::ceil(std::max(double(height) / ny, double(width) / nx)));
  const double spatial_weight = options.compactness * options.compactness / (step * step);

  struct Center {
    double row, col;
    std::vector<double> feature;
  };
  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(nx) * ny);
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      const int r = std::min(height - 1, static_cast<int>((i + 0.5) * height / ny));
      const int c = std::min(width - 1, static_cast<int>((j + 0.5) * width / nx));
      const double* f = base.pixel(static_cast<std::size_t>(r) * width + c);
      centers.push_back({double(r), double(c), std::vector<double>(f, f + ch)});
    }
  }

  std::vector<int> labels(n_pixels, -1);
  std::vector<double> dist(n_pixels);
  for (int it = 0; it < options.iterations; ++it) {
    std::fill(labels.begin(), labels.end(), -1);
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Center& ctr = centers[k];
      const int r0 = std::max(0, static_cast<int>(std::floor(ctr.row)) - window);
      const int r1 = std::min(height - 1, static_cast<int>(std::ceil(ctr.row)) + window);
      const int c0 = std::max(0, static_cast<int>(std::floor(ctr.col)) - window);
      const int c1 = std::min(width - 1, static_cast<int>(std::ceil(ctr.col)) + window);
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const std::size_t p = static_cast<std::size_t>(r) * width + c;
          const double dr = r - ctr.row;
          const double dc = c - ctr.col;
          const double d = simd::squared_distance(base.pixel(p), ctr.feature.data(), ch) +
                           spatial_weight * (dr * dr + dc * dc);
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<int>(k);
          }
        }
      }
    }
    // Pixels outside every window fall back to the spatially nearest center.
    for (long p = 0; p < n_pixels; ++p) {
      if (labels[p] >= 0) continue;
      const double r = double(p / width);
      const double c = double(p % width);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = (r - centers[k].row) * (r - centers[k].row) +
                         (c - centers[k].col) * (c - centers[k].col);
        if (d < best) {
          best = d;
          labels[p] = static_cast<int>(k);
        }
      }
    }
    std::vector<double> sum_r(centers.size(), 0.0), sum_c(centers.size(), 0.0);
    std::vector<double> sum_f(centers.size() * ch, 0.0);
    std::vector<std::size_t> count(centers.size(), 0);
    for (long p = 0; p < n_pixels; ++p) {
      const int k = labels[p];
      sum_r[k] += double(p / width);
      sum_c[k] += double(p % width);
      const double* f = base.pixel(p);
      for (int q = 0; q < ch; ++q) sum_f[k * ch + q] += f[q];
      ++count[k];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (count[k] == 0) continue;
      const double inv = 1.0 / double(count[k]);
      centers[k].row = sum_r[k] * inv;
      centers[k].col = sum_c[k] * inv;
      for (int q = 0; q < ch; ++q) centers[k].feature[q] = sum_f[k * ch + q] * inv;
    }
  }

  enforce_connectivity(height, width, labels);
  Segmentation seg{height, width, 0, std::move(labels)};
  renumber_by_first_appearance(seg.labels, seg.count);
  return seg;
}

void validate_segmentation(const Segmentation& seg) {
  if (seg.labels.size() != static_cast<std::size_t>(seg.height) * seg.width || seg.count < 1) {
    throw DataError("segmentation size does not match its dimensions");
  }
  std::vector<std::size_t> seen(seg.count, 0);
  for (int v : seg.labels) {
    if (v < 0 || v >= seg.count) throw DataError("segment label out of range: " + std::to_string(v));
    ++seen[v];
  }
  for (int k = 0; k < seg.count; ++k) {
    if (seen[k] == 0) throw DataError("segment " + std::to_string(k) + " is empty");
  }
  std::vector<int> component;
  if (label_components(seg.height, seg.width, seg.labels, component) != seg.count) {
    throw DataError("segmentation has a superpixel that is not 4-connected");
  }
}

Segmentation segmentation_from_raster(const LabelRaster& raster) {
  Segmentation seg{raster.height, raster.width, 0, raster.values};
  int max_label = -1;
  for (int v : seg.labels) max_label = std::max(max_label, v);
  seg.count = max_label + 1;
  validate_segmentation(seg);
  return seg;
}

void write_segmentation(const std::filesystem::path& path, const Segmentation& seg) {
  write_label_raster(path, seg.height, seg.width, seg.labels);
}

PixelGrouping group_pixels(const HsiCube& cube, const Segmentation& seg) {
  if (seg.height != cube.height || seg.width != cube.width) {
    throw DataError("segmentation is " + std::to_string(seg.height) + "x" +
                    std::to_string(seg.width) + " but the cube is " + std::to_string(cube.height) +
                    "x" + std::to_string(cube.width));
  }
  PixelGrouping g;
  g.blocks.resize(seg.count);
  g.locate.resize(cube.pixel_count());
  for (int k = 0; k < seg.count; ++k) g.blocks[k].index = k;
  for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
    auto& block = g.blocks[seg.labels[p]];
    g.locate[p] = {seg.labels[p], block.size()};
    block.coords.push_back({static_cast<int>(p / cube.width), static_cast<int>(p % cube.width)});
  }
  for (auto& block : g.blocks) {
    if (block.coords.empty()) throw DataError("segment " + std::to_string(block.index) + " is empty");
    block.X.resize(cube.bands, block.size());
    for (int j = 0; j < block.size(); ++j) {
      const std::size_t p =
          static_cast<std::size_t>(block.coords[j].row) * cube.width + block.coords[j].col;
      for (int b = 0; b < cube.bands; ++b) block.X(b, j) = cube.at(b, p);
    }
  }
  return g;
}

}  // namespace slap
