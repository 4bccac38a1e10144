#pragma once

// Denoised feature tables and the predictive model trained on them.

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <string_view>
#include <vector>

#include "slap/lra_solver.hpp"
#include "slap/superpixel.hpp"

namespace slap {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One feature vector per row; pixel_map gives the linear pixel of each row.
struct FeatureTable {
  RowMatrix values;
  std::vector<std::size_t> pixel_map;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
  const double* row(Eigen::Index i) const { return values.data() + i * values.cols(); }

  // Rows whose pixel is listed in `pixels`, in that order.
  FeatureTable select_pixels(const std::vector<std::size_t>& pixels) const;
};

/// Row p holds the denoised spectrum (column of X_i Z_i) of linear pixel p.
/// `denoised[k]` belongs to `blocks[k]`.
FeatureTable reassemble_denoised(const std::vector<Eigen::MatrixXd>& denoised,
                                 const std::vector<SuperpixelBlock>& blocks);
FeatureTable reassemble_denoised(const std::vector<LraSolution>& solutions,
                                 const std::vector<SuperpixelBlock>& blocks);

/// exp(-|x - y|^2 / (2 sigma^2)).
double rbf_kernel(const double* x, const double* y, std::size_t dim, double sigma);

/// Per-band min-max normalization fitted on training rows.
struct MinMaxScaler {
  std::vector<double> lo;
  std::vector<double> range;  // 0 for constant bands, which map to 0

  static MinMaxScaler fit(const FeatureTable& rows);
  void apply_inplace(RowMatrix& values) const;
};

struct BinarySvm {
  int positive = 0;  // label voted for when the decision value is > 0
  int negative = 0;
  double rho = 0.0;
  std::vector<std::size_t> support;  // rows of SvmModel::support
  std::vector<double> coef;          // y_i alpha_i
};

struct SvmModel {
  int dim = 0;
  double sigma = 1.0;
  double C = 100.0;
  MinMaxScaler scaler;
  std::vector<int> classes;  // ascending
  RowMatrix support;         // scaled support vectors shared by all pairs
  std::vector<BinarySvm> pairs;
};

struct SvmOptions {
  double C = 100.0;
  double sigma = 0.0;  // <= 0: median pairwise training distance
  double tol = 1e-3;   // KKT violation tolerance
};

// Dual solution of one binary problem; exposed for testing.
struct SmoResult {
  std::vector<double> alpha;
  double rho = 0.0;
  int iterations = 0;
};

/// Solves min 1/2 a^T Q a - 1^T a, 0 <= a <= C, y^T a = 0, with
/// Q_ij = y_i y_j K_ij, by sequential minimal optimization using
/// second-order working-set selection.
SmoResult smo_solve(const Eigen::MatrixXd& K, const std::vector<int>& y, double C, double tol);

// Median of the pairwise Euclidean distances between rows.
double median_pairwise_distance(const RowMatrix& rows);

/// One-vs-one RBF SVMs. Throws DataError when fewer than two classes occur.
SvmModel train_svm(const FeatureTable& rows, const std::vector<int>& labels,
                   const SvmOptions& options = {});

// Decision value of each pair for one scaled sample (same order as pairs).
std::vector<double> decision_values(const SvmModel& model, const double* scaled_row);

/// Majority vote over pairs, ties to the smallest label.
std::vector<int> predict(const SvmModel& model, const FeatureTable& table);

void save_model(const std::filesystem::path& path, const SvmModel& model);
SvmModel load_svm_model(const std::filesystem::path& path);

/// Train/predict contract behind which the SVM and a 1-nearest-neighbor
/// fallback are interchangeable.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string_view name() const = 0;
  virtual void train(const FeatureTable& rows, const std::vector<int>& labels) = 0;
  virtual std::vector<int> predict(const FeatureTable& table) const = 0;
  virtual void save(const std::filesystem::path& path) const = 0;
};

class SvmClassifier final : public Classifier {
 public:
  explicit SvmClassifier(SvmOptions options = {}) : options_(options) {}
  explicit SvmClassifier(SvmModel model) : model_(std::move(model)) {}

  std::string_view name() const override { return "svm"; }
  void train(const FeatureTable& rows, const std::vector<int>& labels) override;
  std::vector<int> predict(const FeatureTable& table) const override;
  void save(const std::filesystem::path& path) const override;
  const SvmModel& model() const { return model_; }

 private:
  SvmOptions options_;
  SvmModel model_;
};

class NearestNeighborClassifier final : public Classifier {
 public:
  std::string_view name() const override { return "nn"; }
  void train(const FeatureTable& rows, const std::vector<int>& labels) override;
  std::vector<int> predict(const FeatureTable& table) const override;
  void save(const std::filesystem::path& path) const override;

  static NearestNeighborClassifier load(const std::filesystem::path& path);

 private:
  MinMaxScaler scaler_;
  RowMatrix rows_;
  std::vector<int> labels_;
};

// Reads either model kind, dispatching on the file's header line.
std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& path);

}  // namespace slap
