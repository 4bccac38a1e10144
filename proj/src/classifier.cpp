#include "slap/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "slap/binary_io.hpp"
#include "slap/error.hpp"
#include "slap/simd/kernels.hpp"

namespace slap {

namespace {

constexpr const char* kSvmHeader = "SLAP-SVM v1\n";
constexpr const char* kNnHeader = "SLAP-NN v1\n";
constexpr double kTau = 1e-12;

void check_labels(const FeatureTable& rows, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != rows.rows()) {
    throw ContractError("train: label count does not match row count");
  }
  if (!rows.values.allFinite()) throw DataError("train: non-finite feature value");
  for (int l : labels) {
    if (l < 1) throw DataError("train: labels must be >= 1");
  }
}

RowMatrix scaled_copy(const MinMaxScaler& scaler, const RowMatrix& values) {
  RowMatrix out = values;
  scaler.apply_inplace(out);
  return out;
}

void write_scaler(std::ostream& out, const MinMaxScaler& s) {
  for (double v : s.lo) binary::write_f64(out, v);
  for (double v : s.range) binary::write_f64(out, v);
}

MinMaxScaler read_scaler(std::istream& in, std::size_t dim) {
  MinMaxScaler s;
  s.lo.resize(dim);
  s.range.resize(dim);
  for (double& v : s.lo) v = binary::read_f64(in);
  for (double& v : s.range) v = binary::read_f64(in);
  return s;
}

}  // namespace

FeatureTable FeatureTable::select_pixels(const std::vector<std::size_t>& pixels) const {
  std::map<std::size_t, Eigen::Index> row_of;
  for (Eigen::Index i = 0; i < rows(); ++i) row_of[pixel_map[i]] = i;
  FeatureTable out;
  out.values.resize(static_cast<Eigen::Index>(pixels.size()), dim());
  out.pixel_map = pixels;
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const auto it = row_of.find(pixels[k]);
    if (it == row_of.end()) throw DataError("pixel " + std::to_string(pixels[k]) + " not in table");
    out.values.row(static_cast<Eigen::Index>(k)) = values.row(it->second);
  }
  return out;
}

FeatureTable reassemble_denoised(const std::vector<Eigen::MatrixXd>& denoised,
                                 const std::vector<SuperpixelBlock>& blocks) {
  if (denoised.size() != blocks.size()) {
    throw DataError("have " + std::to_string(denoised.size()) + " block solutions for " +
                    std::to_string(blocks.size()) + " superpixels");
  }
  std::size_t n_pixels = 0;
  Eigen::Index dim = 0;
  int width = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (denoised[k].cols() != blocks[k].size() || denoised[k].rows() != blocks[k].X.rows()) {
      throw DataError("solution " + std::to_string(k) + " does not match its block");
    }
    n_pixels += blocks[k].coords.size();
    dim = blocks[k].X.rows();
    for (const auto& c : blocks[k].coords) width = std::max(width, c.col + 1);
  }
  FeatureTable table;
  table.values.resize(static_cast<Eigen::Index>(n_pixels), dim);
  table.pixel_map.resize(n_pixels);
  for (std::size_t p = 0; p < n_pixels; ++p) table.pixel_map[p] = p;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    for (int j = 0; j < blocks[k].size(); ++j) {
      const auto& c = blocks[k].coords[j];
      const auto p = static_cast<Eigen::Index>(c.row) * width + c.col;
      if (p >= static_cast<Eigen::Index>(n_pixels)) throw DataError("block coordinates exceed the image");
      table.values.row(p) = denoised[k].col(j).transpose();
    }
  }
  return table;
}

FeatureTable reassemble_denoised(const std::vector<LraSolution>& solutions,
                                 const std::vector<SuperpixelBlock>& blocks) {
  std::vector<Eigen::MatrixXd> denoised;
  denoised.reserve(solutions.size());
  for (const auto& s : solutions) denoised.push_back(s.denoised);
  return reassemble_denoised(denoised, blocks);
}

double rbf_kernel(const double* x, const double* y, std::size_t dim, double sigma) {
  if (!(sigma > 0.0)) throw ContractError("rbf_kernel: sigma must be > 0");
  return std::exp(-simd::squared_distance(x, y, dim) / (2.0 * sigma * sigma));
}

MinMaxScaler MinMaxScaler::fit(const FeatureTable& rows) {
  MinMaxScaler s;
  const auto dim = static_cast<std::size_t>(rows.dim());
  s.lo.assign(dim, 0.0);
  s.range.assign(dim, 0.0);
  if (rows.rows() == 0) return s;
  for (std::size_t b = 0; b < dim; ++b) {
    const auto col = rows.values.col(static_cast<Eigen::Index>(b));
    s.lo[b] = col.minCoeff();
    s.range[b] = col.maxCoeff() - s.lo[b];
  }
  return s;
}

void MinMaxScaler::apply_inplace(RowMatrix& values) const {
  if (static_cast<std::size_t>(values.cols()) != lo.size()) {
    throw DataError("feature dimension " + std::to_string(values.cols()) +
                    " does not match the model's " + std::to_string(lo.size()));
  }
  for (Eigen::Index b = 0; b < values.cols(); ++b) {
    auto col = values.col(b);
    if (range[b] > 0.0) {
      col = (col.array() - lo[b]) / range[b];
    } else {
      col.setZero();
    }
  }
}

SmoResult smo_solve(const Eigen::MatrixXd& K, const std::vector<int>& y, double C, double tol) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (K.rows() != n || K.cols() != n) throw ContractError("smo_solve: kernel shape mismatch");
  if (!(C > 0.0)) throw ConfigError("SVM regularization C must be > 0");
  SmoResult r;
  r.alpha.assign(y.size(), 0.0);
  std::vector<double> grad(y.size(), -1.0);
  auto& a = r.alpha;
  const auto is_upper = [&](Eigen::Index t) { return a[t] >= C; };
  const auto is_lower = [&](Eigen::Index t) { return a[t] <= 0.0; };
  const auto q = [&](Eigen::Index i, Eigen::Index j) { return y[i] * y[j] * K(i, j); };
  const long max_iter = std::max<long>(10000000L, 100L * static_cast<long>(n));

  for (long iter = 0; iter < max_iter; ++iter) {
    double g_max = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!is_upper(t) && -grad[t] >= g_max) {
          g_max = -grad[t];
          i = t;
        }
      } else if (!is_lower(t) && grad[t] >= g_max) {
        g_max = grad[t];
        i = t;
      }
    }
    double g_max2 = -std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    double obj_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (is_lower(t)) continue;
        const double diff = g_max + grad[t];
        g_max2 = std::max(g_max2, grad[t]);
        if (diff > 0.0 && i >= 0) {
          double quad = K(i, i) + K(t, t) - 2.0 * y[i] * q(i, t);
          if (quad <= 0.0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= obj_min) {
            obj_min = obj;
            j = t;
          }
        }
      } else {
        if (is_upper(t)) continue;
        const double diff = g_max - grad[t];
        g_max2 = std::max(g_max2, -grad[t]);
        if (diff > 0.0 && i >= 0) {
          double quad = K(i, i) + K(t, t) + 2.0 * y[i] * q(i, t);
          if (quad <= 0.0) quad = kTau;
          const double obj = -(diff * diff) / quad;
          if (obj <= obj_min) {
            obj_min = obj;
            j = t;
          }
        }
      }
    }
    if (i < 0 || j < 0 || g_max + g_max2 < tol) break;
    r.iterations = static_cast<int>(iter + 1);

    const double old_i = a[i];
    const double old_j = a[j];
    if (y[i] != y[j]) {
      double quad = K(i, i) + K(j, j) + 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) {
          a[j] = 0.0;
          a[i] = diff;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = -diff;
      }
      if (diff > 0.0) {
        if (a[i] > C) {
          a[i] = C;
          a[j] = C - diff;
        }
      } else if (a[j] > C) {
        a[j] = C;
        a[i] = C + diff;
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > C) {
        if (a[i] > C) {
          a[i] = C;
          a[j] = sum - C;
        }
      } else if (a[j] < 0.0) {
        a[j] = 0.0;
        a[i] = sum;
      }
      if (sum > C) {
        if (a[j] > C) {
          a[j] = C;
          a[i] = sum - C;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = sum;
      }
    }
    const double di = a[i] - old_i;
    const double dj = a[j] - old_j;
    for (Eigen::Index t = 0; t < n; ++t) grad[t] += q(i, t) * di + q(j, t) * dj;
  }

  double ub = std::numeric_limits<double>::infinity();
  double lb = -ub;
  double free_sum = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (is_upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (is_lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      free_sum += yg;
    }
  }
  r.rho = n_free > 0 ? free_sum / n_free : (ub + lb) / 2.0;
  return r;
}

double median_pairwise_distance(const RowMatrix& rows) {
  const Eigen::Index n = rows.rows();
  const auto dim = static_cast<std::size_t>(rows.cols());
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dists.push_back(std::sqrt(simd::squared_distance(rows.row(i).data(), rows.row(j).data(), dim)));
    }
  }
  if (dists.empty()) return 0.0;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double median = *mid;
  if (dists.size() % 2 == 0) median = 0.5 * (median + *std::max_element(dists.begin(), mid));
  return median;
}

SvmModel train_svm(const FeatureTable& rows, const std::vector<int>& labels,
                   const SvmOptions& options) {
  check_labels(rows, labels);
  if (!(options.C > 0.0)) throw ConfigError("SVM regularization C must be > 0");
  SvmModel model;
  model.dim = static_cast<int>(rows.dim());
  model.C = options.C;
  model.classes = labels;
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) throw DataError("train: need at least two classes");

  model.scaler = MinMaxScaler::fit(rows);
  const RowMatrix x = scaled_copy(model.scaler, rows.values);
  model.sigma = options.sigma > 0.0 ? options.sigma : median_pairwise_distance(x);
  if (!(model.sigma > 0.0)) model.sigma = 1.0;

  const Eigen::Index n = x.rows();
  const auto dim = static_cast<std::size_t>(x.cols());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      K(i, j) = K(j, i) = rbf_kernel(x.row(i).data(), x.row(j).data(), dim, model.sigma);
    }
  }

  std::map<Eigen::Index, std::size_t> support_slot;
  std::vector<Eigen::Index> support_rows;
  for (std::size_t a = 0; a < model.classes.size(); ++a) {
    for (std::size_t b = a + 1; b < model.classes.size(); ++b) {
      std::vector<Eigen::Index> members;
      std::vector<int> y;
      for (Eigen::Index t = 0; t < n; ++t) {
        if (labels[t] == model.classes[a]) {
          members.push_back(t);
          y.push_back(1);
        } else if (labels[t] == model.classes[b]) {
          members.push_back(t);
          y.push_back(-1);
        }
      }
      const auto m = static_cast<Eigen::Index>(members.size());
      Eigen::MatrixXd Kab(m, m);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) Kab(i, j) = K(members[i], members[j]);
      }
      const SmoResult smo = smo_solve(Kab, y, model.C, options.tol);
      BinarySvm pair;
      pair.positive = model.classes[a];
      pair.negative = model.classes[b];
      pair.rho = smo.rho;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (smo.alpha[i] <= 0.0) continue;
        auto [it, inserted] = support_slot.emplace(members[i], support_rows.size());
        if (inserted) support_rows.push_back(members[i]);
        pair.support.push_back(it->second);
        pair.coef.push_back(y[i] * smo.alpha[i]);
      }
      model.pairs.push_back(std::move(pair));
    }
  }
  model.support.resize(static_cast<Eigen::Index>(support_rows.size()), x.cols());
  for (std::size_t s = 0; s < support_rows.size(); ++s) {
    model.support.row(static_cast<Eigen::Index>(s)) = x.row(support_rows[s]);
  }
  return model;
}

std::vector<double> decision_values(const SvmModel& model, const double* scaled_row) {
  const auto dim = static_cast<std::size_t>(model.dim);
  std::vector<double> k(static_cast<std::size_t>(model.support.rows()));
  for (Eigen::Index s = 0; s < model.support.rows(); ++s) {
    k[s] = rbf_kernel(model.support.row(s).data(), scaled_row, dim, model.sigma);
  }
  std::vector<double> out;
  out.reserve(model.pairs.size());
  for (const auto& pair : model.pairs) {
    double f = -pair.rho;
    for (std::size_t i = 0; i < pair.support.size(); ++i) f += pair.coef[i] * k[pair.support[i]];
    out.push_back(f);
  }
  return out;
}

std::vector<int> predict(const SvmModel& model, const FeatureTable& table) {
  if (table.dim() != model.dim) {
    throw DataError("feature dimension " + std::to_string(table.dim()) +
                    " does not match the model's " + std::to_string(model.dim));
  }
  const RowMatrix x = scaled_copy(model.scaler, table.values);
  std::map<int, std::size_t> slot;
  for (std::size_t c = 0; c < model.classes.size(); ++c) slot[model.classes[c]] = c;
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  std::vector<int> votes(model.classes.size());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const std::vector<double> dec = decision_values(model, x.row(r).data());
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t p = 0; p < model.pairs.size(); ++p) {
      ++votes[slot[dec[p] > 0.0 ? model.pairs[p].positive : model.pairs[p].negative]];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
      if (votes[c] > votes[best]) best = c;
    }
    out[r] = model.classes[best];
  }
  return out;
}

void save_model(const std::filesystem::path& path, const SvmModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << kSvmHeader;
  binary::write_u64(out, static_cast<std::uint64_t>(model.dim));
  binary::write_u64(out, model.classes.size());
  binary::write_u64(out, static_cast<std::uint64_t>(model.support.rows()));
  binary::write_u64(out, model.pairs.size());
  binary::write_f64(out, model.sigma);
  binary::write_f64(out, model.C);
  write_scaler(out, model.scaler);
  for (int c : model.classes) binary::write_u64(out, static_cast<std::uint64_t>(c));
  for (Eigen::Index i = 0; i < model.support.size(); ++i) binary::write_f64(out, model.support.data()[i]);
  for (const auto& pair : model.pairs) {
    binary::write_u64(out, static_cast<std::uint64_t>(pair.positive));
    binary::write_u64(out, static_cast<std::uint64_t>(pair.negative));
    binary::write_u64(out, pair.support.size());
    binary::write_f64(out, pair.rho);
    for (std::size_t s : pair.support) binary::write_u64(out, s);
    for (double c : pair.coef) binary::write_f64(out, c);
  }
}

SvmModel load_svm_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  binary::expect_header(in, kSvmHeader);
  SvmModel m;
  m.dim = static_cast<int>(binary::read_count(in));
  const auto n_classes = binary::read_count(in);
  const auto n_support = binary::read_count(in);
  const auto n_pairs = binary::read_count(in);
  m.sigma = binary::read_f64(in);
  m.C = binary::read_f64(in);
  m.scaler = read_scaler(in, static_cast<std::size_t>(m.dim));
  for (std::uint64_t c = 0; c < n_classes; ++c) m.classes.push_back(static_cast<int>(binary::read_count(in)));
  m.support.resize(static_cast<Eigen::Index>(n_support), m.dim);
  for (Eigen::Index i = 0; i < m.support.size(); ++i) m.support.data()[i] = binary::read_f64(in);
  for (std::uint64_t p = 0; p < n_pairs; ++p) {
    BinarySvm pair;
    pair.positive = static_cast<int>(binary::read_count(in));
    pair.negative = static_cast<int>(binary::read_count(in));
    const auto count = binary::read_count(in, n_support);
    pair.rho = binary::read_f64(in);
    for (std::uint64_t s = 0; s < count; ++s) pair.support.push_back(binary::read_count(in, n_support - 1));
    for (std::uint64_t s = 0; s < count; ++s) pair.coef.push_back(binary::read_f64(in));
    m.pairs.push_back(std::move(pair));
  }
  return m;
}

void SvmClassifier::train(const FeatureTable& rows, const std::vector<int>& labels) {
  model_ = train_svm(rows, labels, options_);
}

std::vector<int> SvmClassifier::predict(const FeatureTable& table) const {
  return slap::predict(model_, table);
}

void SvmClassifier::save(const std::filesystem::path& path) const { save_model(path, model_); }

void NearestNeighborClassifier::train(const FeatureTable& rows, const std::vector<int>& labels) {
  check_labels(rows, labels);
  if (rows.rows() == 0) throw DataError("train: no training rows");
  scaler_ = MinMaxScaler::fit(rows);
  rows_ = scaled_copy(scaler_, rows.values);
  labels_ = labels;
}

std::vector<int> NearestNeighborClassifier::predict(const FeatureTable& table) const {
  const RowMatrix x = scaled_copy(scaler_, table.values);
  const auto dim = static_cast<std::size_t>(x.cols());
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < rows_.rows(); ++t) {
      const double d = simd::squared_distance(rows_.row(t).data(), x.row(r).data(), dim);
      if (d < best) {
        best = d;
        out[r] = labels_[t];
      }
    }
  }
  return out;
}

void NearestNeighborClassifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << kNnHeader;
  binary::write_u64(out, static_cast<std::uint64_t>(rows_.cols()));
  binary::write_u64(out, static_cast<std::uint64_t>(rows_.rows()));
  write_scaler(out, scaler_);
  for (int l : labels_) binary::write_u64(out, static_cast<std::uint64_t>(l));
  for (Eigen::Index i = 0; i < rows_.size(); ++i) binary::write_f64(out, rows_.data()[i]);
}

NearestNeighborClassifier NearestNeighborClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  binary::expect_header(in, kNnHeader);
  NearestNeighborClassifier c;
  const auto dim = binary::read_count(in);
  const auto n = binary::read_count(in);
  c.scaler_ = read_scaler(in, dim);
  for (std::uint64_t i = 0; i < n; ++i) c.labels_.push_back(static_cast<int>(binary::read_count(in)));
  c.rows_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < c.rows_.size(); ++i) c.rows_.data()[i] = binary::read_f64(in);
  return c;
}

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  line += "\n";
  if (line == kSvmHeader) return std::make_unique<SvmClassifier>(load_svm_model(path));
  if (line == kNnHeader) {
    return std::make_unique<NearestNeighborClassifier>(NearestNeighborClassifier::load(path));
  }
  throw DataError(path.string() + ": not a model file");
}

}  // namespace slap
