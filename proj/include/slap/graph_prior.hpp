#pragma once

// Per-superpixel graph Laplacian used by the trace regularizer.

#include <Eigen/Dense>

#include "slap/superpixel.hpp"

namespace slap {

struct LaplacianPrior {
  Eigen::MatrixXd G;       // n_i x n_i, symmetric PSD, zero row sums
  Eigen::MatrixXd G_pinv;  // Moore-Penrose pseudoinverse of G
};

struct LaplacianOptions {
  int k_neighbors = 10;  // capped at n_i - 1
  // Gaussian bandwidth; <= 0 selects the mean nearest-neighbor distance.
  double sigma = 0.0;
};

// Relative eigenvalue cutoff below which an eigenvalue counts as zero.
inline constexpr double kRankTolerance = 1e-10;

/// kNN graph over the block's spectra with Gaussian weights
/// exp(-|x_u - x_v|^2 / (2 sigma^2)), symmetrized by max; G = D - W.
LaplacianPrior build_laplacian(const SuperpixelBlock& block, const LaplacianOptions& options = {});

/// Same construction from a raw d x n matrix of column samples.
LaplacianPrior build_laplacian(const Eigen::MatrixXd& columns, const LaplacianOptions& options = {});

/// Pseudoinverse of a symmetric matrix by eigendecomposition: eigenvalues with
/// |lambda| <= rel_tol * max|lambda| are treated as zero. Throws ContractError
/// if M is not symmetric to 1e-10 relative.
Eigen::MatrixXd pseudoinverse(const Eigen::MatrixXd& M, double rel_tol = kRankTolerance);

}  // namespace slap
