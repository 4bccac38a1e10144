#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "slap/classifier.hpp"
#include "slap/error.hpp"
#include "support.hpp"

using namespace slap;

namespace {

FeatureTable table_from(const std::vector<std::vector<double>>& rows) {
  FeatureTable t;
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.values(i, j) = rows[i][j];
    t.pixel_map.push_back(i);
  }
  return t;
}

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
  return static_cast<double>(hit) / a.size();
}

// Gaussian clusters around `centers`, `per` points each, labelled by `labels`.
void clusters(Rng& rng, const std::vector<std::vector<double>>& centers, const std::vector<int>& labels,
              int per, double spread, std::vector<std::vector<double>>& rows, std::vector<int>& y) {
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (int i = 0; i < per; ++i) {
      std::vector<double> r = centers[c];
      for (auto& v : r) v += spread * rng.normal();
      rows.push_back(r);
      y.push_back(labels[c]);
    }
  }
}

}  // namespace

TEST_CASE("rbf kernel values") {
  const double x[] = {1.0, 2.0};
  const double y[] = {1.0, 2.0 + std::sqrt(2.0) * 0.5};
  const double far[] = {1e6, -1e6};
  CHECK(rbf_kernel(x, x, 2, 0.7) == 1.0);
  CHECK(rbf_kernel(x, y, 2, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(rbf_kernel(x, far, 2, 1.0) == 0.0);
}

TEST_CASE("median pairwise distance matches a direct computation") {
  Rng rng(9);
  RowMatrix rows = slap::test::random_matrix(rng, 9, 3);
  std::vector<double> d;
  for (int i = 0; i < 9; ++i) {
    for (int j = i + 1; j < 9; ++j) d.push_back((rows.row(i) - rows.row(j)).norm());
  }
  std::sort(d.begin(), d.end());
  const double median = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  CHECK(median_pairwise_distance(rows) == doctest::Approx(median).epsilon(1e-12));
}

TEST_CASE("min-max scaler maps training rows into the unit box") {
  const FeatureTable t = table_from({{1, 5, 2}, {3, 5, -2}, {2, 5, 0}});
  const MinMaxScaler s = MinMaxScaler::fit(t);
  RowMatrix v = t.values;
  s.apply_inplace(v);
  CHECK(v(0, 0) == 0.0);
  CHECK(v(1, 0) == 1.0);
  CHECK(v(2, 0) == 0.5);
  CHECK(v(0, 1) == 0.0);  // constant band
  CHECK(v(1, 2) == 0.0);
  CHECK(v(0, 2) == 1.0);
}

TEST_CASE("SMO solution satisfies the dual KKT conditions") {
  Rng rng(5);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  clusters(rng, {{0, 0}, {1, 1}}, {1, -1}, 15, 0.5, rows, y);
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) K(i, j) = rbf_kernel(rows[i].data(), rows[j].data(), 2, 0.5);
  }
  const double C = 10.0, tol = 1e-3;
  const SmoResult r = smo_solve(K, y, C, tol);
  double balance = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    CHECK(r.alpha[i] >= 0.0);
    CHECK(r.alpha[i] <= C);
    balance += y[i] * r.alpha[i];
    double f = -r.rho;
    for (Eigen::Index j = 0; j < n; ++j) f += y[j] * r.alpha[j] * K(i, j);
    const double margin = y[i] * f;
    // Free vectors sit on the margin; bound ones on the correct/wrong side.
    if (r.alpha[i] <= 1e-12) CHECK(margin >= 1.0 - 2 * tol);
    else if (r.alpha[i] >= C - 1e-12) CHECK(margin <= 1.0 + 2 * tol);
    else CHECK(std::abs(margin - 1.0) <= 2 * tol);
  }
  CHECK(std::abs(balance) <= 1e-9);
}

TEST_CASE("separable clusters are learned exactly") {
  Rng rng(1);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  clusters(rng, {{0, 0, 0}, {4, 4, 4}}, {2, 5}, 20, 0.3, rows, y);
  const FeatureTable t = table_from(rows);
  const SvmModel model = train_svm(t, y);
  CHECK(accuracy(predict(model, t), y) == 1.0);
  REQUIRE(model.pairs.size() == 1);
  CHECK(model.pairs[0].positive == 2);
  CHECK_FALSE(model.pairs[0].support.empty());
  for (double c : model.pairs[0].coef) CHECK(std::abs(c) <= model.C + 1e-12);

  // Support vectors alone are classified as trained.
  std::vector<std::vector<double>> sv_rows;
  std::vector<int> sv_labels;
  for (std::size_t k = 0; k < model.pairs[0].support.size(); ++k) {
    const auto idx = model.pairs[0].support[k];
    std::vector<double> r(3);
    for (int j = 0; j < 3; ++j) r[j] = model.support(idx, j) * model.scaler.range[j] + model.scaler.lo[j];
    sv_rows.push_back(r);
    sv_labels.push_back(model.pairs[0].coef[k] > 0 ? 2 : 5);
  }
  CHECK(predict(model, table_from(sv_rows)) == sv_labels);
}

TEST_CASE("single-pair decision sign picks the label") {
  const FeatureTable t = table_from({{0.0}, {0.1}, {0.9}, {1.0}});
  const SvmModel model = train_svm(t, {3, 3, 7, 7});
  const FeatureTable probe = table_from({{-0.5}, {1.5}});
  const auto labels = predict(model, probe);
  CHECK(labels == std::vector<int>{3, 7});
  RowMatrix scaled = probe.values;
  model.scaler.apply_inplace(scaled);
  CHECK(decision_values(model, scaled.data())[0] > 0.0);
  CHECK(decision_values(model, scaled.data() + 1)[0] < 0.0);
}

TEST_CASE("conflicting duplicates train with a soft margin") {
  const FeatureTable t = table_from({{0.0, 0.0}, {0.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}, {0.0, 0.0}});
  const std::vector<int> y = {1, 2, 2, 2, 1};
  SvmOptions opt;
  opt.C = 0.1;
  SvmModel model;
  CHECK_NOTHROW(model = train_svm(t, y, opt));
  CHECK(accuracy(predict(model, t), y) < 1.0);
}

TEST_CASE("XOR layout is separated by the RBF machine") {
  Rng rng(3);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  clusters(rng, {{0, 0}, {1, 1}, {0, 1}, {1, 0}}, {1, 1, 2, 2}, 25, 0.1, rows, y);
  const FeatureTable t = table_from(rows);
  const SvmModel model = train_svm(t, y);
  CHECK(accuracy(predict(model, t), y) >= 0.95);
}

TEST_CASE("multi-class voting and single-class rejection") {
  Rng rng(7);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  clusters(rng, {{0, 0}, {3, 0}, {0, 3}, {3, 3}}, {1, 2, 3, 4}, 10, 0.2, rows, y);
  const FeatureTable t = table_from(rows);
  const SvmModel model = train_svm(t, y);
  CHECK(model.pairs.size() == 6);
  CHECK(model.classes == std::vector<int>{1, 2, 3, 4});
  CHECK(accuracy(predict(model, t), y) == 1.0);
  CHECK_THROWS_AS(train_svm(table_from({{0.0}, {1.0}}), {2, 2}), DataError);
}

TEST_CASE("models round-trip through files") {
  slap::test::TempDir dir("model");
  Rng rng(2);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  clusters(rng, {{0, 0, 1}, {2, 1, 0}, {1, 3, 3}}, {1, 2, 3}, 12, 0.4, rows, y);
  const FeatureTable t = table_from(rows);

  SvmClassifier svm;
  svm.train(t, y);
  svm.save(dir / "svm.bin");
  const auto loaded = load_classifier(dir / "svm.bin");
  CHECK(loaded->name() == "svm");
  CHECK(loaded->predict(t) == svm.predict(t));

  NearestNeighborClassifier nn;
  nn.train(t, y);
  CHECK(nn.predict(t) == y);
  nn.save(dir / "nn.bin");
  const auto nn_loaded = load_classifier(dir / "nn.bin");
  CHECK(nn_loaded->name() == "nn");
  CHECK(nn_loaded->predict(t) == y);

  slap::test::spit(dir / "junk.bin", "not a model\n");
  CHECK_THROWS_AS(load_classifier(dir / "junk.bin"), DataError);
}

TEST_CASE("identity coefficients reproduce the cube") {
  Rng rng(4);
  HsiCube cube{3, 4, 5, {}};
  for (int i = 0; i < 60; ++i) cube.data.push_back(static_cast<float>(rng.uniform()));
  const PixelGrouping g = group_pixels(cube, {3, 4, 1, std::vector<int>(12, 0)});
  const FeatureTable t = reassemble_denoised({g.blocks[0].X * Eigen::MatrixXd::Identity(12, 12)}, g.blocks);
  REQUIRE(t.rows() == 12);
  for (std::size_t p = 0; p < 12; ++p) {
    CHECK(t.pixel_map[p] == p);
    for (int b = 0; b < 5; ++b) CHECK(t.values(p, b) == static_cast<double>(cube.at(b, p)));
  }
  CHECK_THROWS(reassemble_denoised(std::vector<Eigen::MatrixXd>{}, g.blocks));
}

TEST_CASE("rows follow global pixel order for any segmentation") {
  Rng rng(5);
  HsiCube cube{4, 4, 2, {}};
  for (int i = 0; i < 32; ++i) cube.data.push_back(static_cast<float>(i));
  const PixelGrouping g = group_pixels(cube, {4, 4, 3, {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2}});
  std::vector<Eigen::MatrixXd> same;
  for (const auto& b : g.blocks) same.push_back(b.X);
  const FeatureTable t = reassemble_denoised(same, g.blocks);
  CHECK(t.rows() == 16);
  for (std::size_t p = 0; p < 16; ++p) CHECK(t.values(p, 1) == 16.0 + p);
}

TEST_CASE("noise-free rank-one block denoises to its spectrum") {
  Rng rng(6);
  HsiCube cube{3, 3, 6, {}};
  std::vector<float> spectrum(6);
  for (auto& v : spectrum) v = static_cast<float>(rng.uniform(0.2, 1.0));
  for (int b = 0; b < 6; ++b) {
    for (int p = 0; p < 9; ++p) cube.data.push_back(spectrum[b]);
  }
  const PixelGrouping g = group_pixels(cube, {3, 3, 1, std::vector<int>(9, 0)});
  SolverConfig cfg;
  cfg.gamma = 0.0;
  const LraSolution sol = solve(g.blocks[0], build_laplacian(g.blocks[0]), cfg);
  const FeatureTable t = reassemble_denoised(std::vector<LraSolution>{sol}, g.blocks);
  Eigen::VectorXd s(6);
  for (int b = 0; b < 6; ++b) s(b) = spectrum[b];
  for (Eigen::Index p = 0; p < 9; ++p) CHECK((t.values.row(p).transpose() - s).norm() <= 1e-2 * s.norm());
}
