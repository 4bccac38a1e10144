#pragma once

// Laplacian-regularized low-rank approximation of one superpixel block,
//
//   min ||Z||_* + lambda ||E||_{2,1} + gamma Tr(X Z G (X Z)^T)
//   s.t. X = X Z + E,  Z >= 0,
//
// solved by an inexact augmented Lagrangian method with auxiliary variables
// W = Z (nuclear norm) and J = Z (trace term).

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "slap/graph_prior.hpp"
#include "slap/superpixel.hpp"

namespace slap {

// How the J-step treats columns in the null space of G^+ (the constant
// vector, one per connected component of the graph). There the
// pseudoinverse-form Sylvester equation only says A J' = 0.
enum class NullSpaceCompletion {
  // Take the J-subproblem minimizer, Z + Gamma2/mu. Default.
  kSubproblem,
  // Minimum-norm value 0. Forces J 1 = 0 and hence Z -> 0 at feasibility.
  kZero,
};

struct SolverConfig {
  double lambda = 1.0;
  double gamma = 0.0;
  double mu0 = 1e-4;
  double mu_max = 1e12;
  double rho = 1.1;
  double epsilon = 1e-3;
  int max_iters = 200;
  NullSpaceCompletion completion = NullSpaceCompletion::kSubproblem;
  // Keep at most this many singular values in the W-step; 0 keeps all.
  int svt_max_rank = 0;
  // Record the relative residual of the Sylvester system at every J-step.
  bool track_sylvester_residual = false;

  // Throws ConfigError on lambda <= 0, gamma < 0, mu0 <= 0, rho <= 1,
  // epsilon <= 0, mu_max < mu0, max_iters < 1 or svt_max_rank < 0.
  void validate() const;
};

struct LraState {
  Eigen::MatrixXd W, Z, J, E;
  Eigen::MatrixXd Gamma1;  // d x n
  Eigen::MatrixXd Gamma2, Gamma3;  // n x n
  double mu = 0.0;
  int iter = 0;

  static LraState zeros(Eigen::Index d, Eigen::Index n, double mu0);
};

// Infinity-norm (max |entry|) constraint residuals.
struct Residuals {
  double reconstruction = 0.0;  // X - XZ - E
  double z_minus_j = 0.0;
  double z_minus_w = 0.0;

  double max() const;
};

struct TraceEntry {
  int iter = 0;
  Residuals residuals;
  double mu = 0.0;  // penalty used during this iteration
  // Only when tracked: RHS-relative residual and normwise backward error of
  // the J-step on the range of G^+.
  double sylvester_residual = 0.0;
  double sylvester_backward_error = 0.0;
};

struct LraSolution {
  Eigen::MatrixXd Z;         // n x n, entrywise >= 0
  Eigen::MatrixXd E;         // d x n
  Eigen::MatrixXd denoised;  // X Z
  bool converged = false;
  std::vector<TraceEntry> trace;

  int iterations() const { return static_cast<int>(trace.size()); }
  // Per-iteration max of the three residuals.
  std::vector<double> residual_trace() const;
};

/// Singular value thresholding: U max(Sigma - tau, 0) V^T, the proximal map of
/// tau ||.||_*. A positive `max_rank` also drops all but the largest
/// `max_rank` singular values.
Eigen::MatrixXd svt(const Eigen::MatrixXd& P, double tau, int max_rank = 0);

/// Z-step: (X^T X + 2I)^{-1}(X^T X - X^T E + X^T Gamma1/mu + J - Gamma2/mu
/// + W - Gamma3/mu), clipped at 0.
Eigen::MatrixXd update_z(const Eigen::MatrixXd& X, const Eigen::MatrixXd& E,
                         const Eigen::MatrixXd& J, const Eigen::MatrixXd& W,
                         const Eigen::MatrixXd& Gamma1, const Eigen::MatrixXd& Gamma2,
                         const Eigen::MatrixXd& Gamma3, double mu);

/// Column-wise shrinkage, the proximal map of tau ||.||_{2,1}.
Eigen::MatrixXd prox_l21(const Eigen::MatrixXd& D, double tau);

/// Solves A J + mu J B = mu M B for symmetric PSD A (k x k) and B (n x n) by
/// diagonalizing both. With A = Ua La Ua^T and B = Ub Lb Ub^T the system is
/// entrywise in the rotated basis: J'_kl = mu Lb_l M'_kl / (La_k + mu Lb_l).
/// Both decompositions are computed once; solve() is then a few products.
class SymmetricSylvester {
 public:
  SymmetricSylvester(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

  Eigen::MatrixXd solve(const Eigen::MatrixXd& M, double mu,
                        NullSpaceCompletion completion = NullSpaceCompletion::kZero) const;

  // ||A J + mu J B - mu M B||_F / ||mu M B||_F (0 when the right side is 0).
  double relative_residual(const Eigen::MatrixXd& J, const Eigen::MatrixXd& M, double mu) const;

  // ||A J + mu J B - mu M B||_F / (||A||_F ||J||_F + mu ||J||_F ||B||_F +
  // ||mu M B||_F). Unlike relative_residual this is not inflated by rounding
  // in A J when ||A|| ||J|| >> ||mu M B||.
  double backward_error(const Eigen::MatrixXd& J, const Eigen::MatrixXd& M, double mu) const;
  // M restricted to the null space of B (what kSubproblem adds there).
  Eigen::MatrixXd null_part(const Eigen::MatrixXd& M) const;
  // J with its null-space-of-B columns (in B's eigenbasis) removed.
  Eigen::MatrixXd range_part(const Eigen::MatrixXd& J) const;

 private:
  // Entrywise inverse of the operator in both eigenbases, range of B only.
  Eigen::MatrixXd apply_inverse(const Eigen::MatrixXd& R, double mu) const;

  Eigen::MatrixXd A_, B_;
  Eigen::MatrixXd Ua_, Ub_;
  Eigen::VectorXd la_, lb_;
  std::vector<bool> b_null_;
  bool a_zero_ = false;
};

/// J-step as the Sylvester system 2 gamma X^T X J + mu J G^+ =
/// mu (Z + Gamma2/mu) G^+; vanishing denominators give 0.
Eigen::MatrixXd update_j(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                         const Eigen::MatrixXd& Gamma2, double mu, double gamma,
                         const Eigen::MatrixXd& G_pinv);

/// Multiplier ascent and penalty growth; returns the residuals it used.
Residuals update_multipliers(LraState& state, const Eigen::MatrixXd& X, const SolverConfig& cfg);

/// Runs W -> Z -> E -> J -> multipliers until all three residuals are
/// <= epsilon or max_iters is reached. Throws NumericalError on NaN/Inf.
LraSolution solve(const Eigen::MatrixXd& X, const LaplacianPrior& prior, const SolverConfig& cfg);
LraSolution solve(const SuperpixelBlock& block, const LaplacianPrior& prior,
                  const SolverConfig& cfg);

/// Value of the model objective at (Z, E).
double lra_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& E,
                     const Eigen::MatrixXd& G, double lambda, double gamma);

// CSV `iter,res1,res2,res3,mu`.
void write_residual_trace(const std::filesystem::path& path, const LraSolution& solution);

}  // namespace slap
