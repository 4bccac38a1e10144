#include "slap/graph_prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "slap/error.hpp"
#include "slap/simd/kernels.hpp"

namespace slap {

Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& M, double rel_tol) {
  if (M.rows() != M.cols()) throw ContractError("pseudoinverse: matrix is not square");
  const double norm = M.norm();
  if ((M - M.transpose()).norm() > 1e-10 * norm) {
    throw ContractError("pseudoinverse: matrix is not symmetric");
  }
  if (M.size() == 0 || norm == 0.0) return Eigen::MatrixXd::Zero(M.rows(), M.cols());
  const Eigen::MatrixXd sym = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = rel_tol * lambda.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    inv(i) = std::fabs(lambda(i)) > cutoff ? 1.0 / lambda(i) : 0.0;
  }
  const Eigen::MatrixXd& U = eig.eigenvectors();
  Eigen::MatrixXd out = U * inv.asDiagonal() * U.transpose();
  return 0.5 * (out + out.transpose());
}

LaplacianPrior build_laplacian(const Eigen::MatrixXd& columns, const LaplacianOptions& options) {
  const Eigen::Index n = columns.cols();
  const auto d = static_cast<std::size_t>(columns.rows());
  if (n < 1) throw ContractError("build_laplacian: empty block");
  LaplacianPrior prior;
  if (n == 1) {
    prior.G = Eigen::MatrixXd::Zero(1, 1);
    prior.G_pinv = Eigen::MatrixXd::Zero(1, 1);
    return prior;
  }
  const int k = std::min<int>(std::max(options.k_neighbors, 1), static_cast<int>(n - 1));

  Eigen::MatrixXd dist2(n, n);
  for (Eigen::Index u = 0; u < n; ++u) {
    dist2(u, u) = 0.0;
    for (Eigen::Index v = u + 1; v < n; ++v) {
      const double s = simd::squared_distance(columns.col(u).data(), columns.col(v).data(), d);
      dist2(u, v) = s;
      dist2(v, u) = s;
    }
  }

  // neighbors[u]: k nearest v != u, ties by index.
  std::vector<std::vector<Eigen::Index>> neighbors(n);
  std::vector<Eigen::Index> order(n - 1);
  for (Eigen::Index u = 0; u < n; ++u) {
    Eigen::Index m = 0;
    for (Eigen::Index v = 0; v < n; ++v) {
      if (v != u) order[m++] = v;
    }
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        return dist2(u, a) < dist2(u, b) || (dist2(u, a) == dist2(u, b) && a < b);
                      });
    neighbors[u].assign(order.begin(), order.begin() + k);
  }

  double sigma = options.sigma;
  if (sigma <= 0.0) {
    double sum = 0.0;
    for (Eigen::Index u = 0; u < n; ++u) sum += std::sqrt(dist2(u, neighbors[u].front()));
    sigma = sum / static_cast<double>(n);
    if (sigma <= 0.0) {
      // Every point has an exact duplicate: fall back to the positive kNN distances.
      double pos_sum = 0.0;
      int pos_count = 0;
      for (Eigen::Index u = 0; u < n; ++u) {
        for (Eigen::Index v : neighbors[u]) {
          if (dist2(u, v) > 0.0) {
            pos_sum += std::sqrt(dist2(u, v));
            ++pos_count;
          }
        }
      }
      sigma = pos_count > 0 ? pos_sum / pos_count : 1.0;
    }
  }
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index u = 0; u < n; ++u) {
    for (Eigen::Index v : neighbors[u]) {
      const double w = std::exp(-dist2(u, v) * inv_two_sigma2);
      W(u, v) = std::max(W(u, v), w);
      W(v, u) = W(u, v);
    }
  }
  prior.G = -W;
  prior.G.diagonal() = W.rowwise().sum();
  prior.G_pinv = pseudoinverse(prior.G);
  return prior;
}

LaplacianPrior build_laplacian(const SuperpixelBlock& block, const LaplacianOptions& options) {
  return build_laplacian(block.X, options);
}

}  // namespace slap
