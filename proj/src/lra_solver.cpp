#include "slap/lra_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "slap/error.hpp"
#include "slap/simd/kernels.hpp"

namespace slap {

namespace {

double inf_norm(const Eigen::MatrixXd& M) {
  return simd::max_abs(M.data(), static_cast<std::size_t>(M.size()));
}

void require_finite(const Eigen::MatrixXd& M, const char* what, int iter) {
  if (!M.allFinite()) {
    throw NumericalError(std::string("non-finite value in ") + what + " at iteration " +
                         std::to_string(iter));
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!(mu0 > 0.0)) throw ConfigError("mu0 must be > 0");
  if (!(mu_max >= mu0)) throw ConfigError("mu_max must be >= mu0");
  if (!(rho > 1.0)) throw ConfigError("rho must be > 1");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (svt_max_rank < 0) throw ConfigError("svt_max_rank must be >= 0");
}

LraState LraState::zeros(Eigen::Index d, Eigen::Index n, double mu0) {
  LraState s;
  s.W = Eigen::MatrixXd::Zero(n, n);
  s.Z = Eigen::MatrixXd::Zero(n, n);
  s.J = Eigen::MatrixXd::Zero(n, n);
  s.E = Eigen::MatrixXd::Zero(d, n);
  s.Gamma1 = Eigen::MatrixXd::Zero(d, n);
  s.Gamma2 = Eigen::MatrixXd::Zero(n, n);
  s.Gamma3 = Eigen::MatrixXd::Zero(n, n);
  s.mu = mu0;
  return s;
}

double Residuals::max() const { return std::max({reconstruction, z_minus_j, z_minus_w}); }

std::vector<double> LraSolution::residual_trace() const {
  std::vector<double> out;
  out.reserve(trace.size());
  for (const auto& t : trace) out.push_back(t.residuals.max());
  return out;
}

Eigen::MatrixXd svt(const Eigen::MatrixXd& P, double tau, int max_rank) {
  if (!(tau > 0.0)) throw ContractError("svt: tau must be > 0");
  // sigma_max <= ||P||_F, so everything shrinks to zero below this bound.
  if (P.norm() <= tau) return Eigen::MatrixXd::Zero(P.rows(), P.cols());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(P, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::Index keep = 0;
  const Eigen::Index limit = max_rank > 0 ? std::min<Eigen::Index>(max_rank, s.size()) : s.size();
  while (keep < limit && s(keep) > tau) ++keep;
  const Eigen::VectorXd shrunk = s.head(keep).array() - tau;
  return svd.matrixU().leftCols(keep) * shrunk.asDiagonal() *
         svd.matrixV().leftCols(keep).transpose();
}

Eigen::MatrixXd update_z(const Eigen::MatrixXd& X, const Eigen::MatrixXd& E,
                         const Eigen::MatrixXd& J, const Eigen::MatrixXd& W,
                         const Eigen::MatrixXd& Gamma1, const Eigen::MatrixXd& Gamma2,
                         const Eigen::MatrixXd& Gamma3, double mu) {
  if (!(mu > 0.0)) throw ContractError("update_z: mu must be > 0");
  const Eigen::Index n = X.cols();
  Eigen::MatrixXd lhs = X.transpose() * X;
  lhs.diagonal().array() += 2.0;
  const Eigen::MatrixXd rhs =
      X.transpose() * (X - E + Gamma1 / mu) + J - Gamma2 / mu + W - Gamma3 / mu;
  Eigen::MatrixXd Z = lhs.llt().solve(rhs);
  simd::clamp_nonnegative(Z.data(), static_cast<std::size_t>(n * n));
  return Z;
}

Eigen::MatrixXd prox_l21(const Eigen::MatrixXd& D, double tau) {
  if (!(tau >= 0.0)) throw ContractError("prox_l21: tau must be >= 0");
  Eigen::MatrixXd E = D;
  const auto d = static_cast<std::size_t>(D.rows());
  for (Eigen::Index j = 0; j < D.cols(); ++j) {
    double* col = E.col(j).data();
    const double norm = std::sqrt(simd::dot(col, col, d));
    if (norm > tau) {
      simd::scale(col, (norm - tau) / norm, d);
    } else {
      E.col(j).setZero();
    }
  }
  return E;
}

SymmetricSylvester::SymmetricSylvester(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B)
    : A_(A), B_(B) {
  if (A.rows() != A.cols() || B.rows() != B.cols()) {
    throw ContractError("SymmetricSylvester: coefficient matrices must be square");
  }
  a_zero_ = A.isZero(0.0);
  if (a_zero_) {
    la_ = Eigen::VectorXd::Zero(A.rows());
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(0.5 * (A + A.transpose()));
    Ua_ = ea.eigenvectors();
    la_ = ea.eigenvalues();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(0.5 * (B + B.transpose()));
  Ub_ = eb.eigenvectors();
  lb_ = eb.eigenvalues();
  const double b_max = lb_.size() ? lb_.cwiseAbs().maxCoeff() : 0.0;
  b_null_.resize(static_cast<std::size_t>(lb_.size()));
  for (Eigen::Index l = 0; l < lb_.size(); ++l) {
    b_null_[l] = std::fabs(lb_(l)) <= kRankTolerance * b_max;
  }
}

Eigen::MatrixXd SymmetricSylvester::solve(const Eigen::MatrixXd& M, double mu,
                                          NullSpaceCompletion completion) const {
  if (!(mu > 0.0)) throw ContractError("SymmetricSylvester: mu must be > 0");
  if (M.rows() != la_.size() || M.cols() != lb_.size()) {
    throw ContractError("SymmetricSylvester: right-hand side has the wrong shape");
  }
  Eigen::MatrixXd J = apply_inverse(mu * M * B_, mu);
  if (completion == NullSpaceCompletion::kSubproblem) J += null_part(M);
  return J;
}

Eigen::MatrixXd SymmetricSylvester::null_part(const Eigen::MatrixXd& M) const {
  Eigen::MatrixXd rotated = M * Ub_;
  for (Eigen::Index l = 0; l < rotated.cols(); ++l) {
    if (!b_null_[l]) rotated.col(l).setZero();
  }
  return rotated * Ub_.transpose();
}

Eigen::MatrixXd SymmetricSylvester::apply_inverse(const Eigen::MatrixXd& R, double mu) const {
  Eigen::MatrixXd rotated = a_zero_ ? Eigen::MatrixXd(R * Ub_) : Eigen::MatrixXd(Ua_.transpose() * R * Ub_);
  const double a_max = la_.size() ? la_.cwiseAbs().maxCoeff() : 0.0;
  const double b_max = lb_.size() ? lb_.cwiseAbs().maxCoeff() : 0.0;
  const double tiny = 1e-12 * (a_max + mu * b_max);
  for (Eigen::Index l = 0; l < rotated.cols(); ++l) {
    for (Eigen::Index k = 0; k < rotated.rows(); ++k) {
      const double den = la_(k) + mu * lb_(l);
      rotated(k, l) = b_null_[l] || std::fabs(den) < tiny ? 0.0 : rotated(k, l) / den;
    }
  }
  return a_zero_ ? Eigen::MatrixXd(rotated * Ub_.transpose())
                 : Eigen::MatrixXd(Ua_ * rotated * Ub_.transpose());
}

double SymmetricSylvester::relative_residual(const Eigen::MatrixXd& J, const Eigen::MatrixXd& M,
                                             double mu) const {
  const Eigen::MatrixXd rhs = mu * M * B_;
  const double scale = rhs.norm();
  const double res = (A_ * J + mu * J * B_ - rhs).norm();
  return scale > 0.0 ? res / scale : res;
}

double SymmetricSylvester::backward_error(const Eigen::MatrixXd& J, const Eigen::MatrixXd& M,
                                          double mu) const {
  const Eigen::MatrixXd rhs = mu * M * B_;
  const double scale = A_.norm() * J.norm() + mu * J.norm() * B_.norm() + rhs.norm();
  const double res = (A_ * J + mu * J * B_ - rhs).norm();
  return scale > 0.0 ? res / scale : res;
}

Eigen::MatrixXd SymmetricSylvester::range_part(const Eigen::MatrixXd& J) const {
  Eigen::MatrixXd rotated = J * Ub_;
  for (Eigen::Index l = 0; l < rotated.cols(); ++l) {
    if (b_null_[l]) rotated.col(l).setZero();
  }
  return rotated * Ub_.transpose();
}

Eigen::MatrixXd update_j(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                         const Eigen::MatrixXd& Gamma2, double mu, double gamma,
                         const Eigen::MatrixXd& G_pinv) {
  const Eigen::MatrixXd A = 2.0 * gamma * (X.transpose() * X);
  const SymmetricSylvester sylvester(A, G_pinv);
  return sylvester.solve(Z + Gamma2 / mu, mu, NullSpaceCompletion::kZero);
}

Residuals update_multipliers(LraState& s, const Eigen::MatrixXd& X, const SolverConfig& cfg) {
  const Eigen::MatrixXd r1 = X - X * s.Z - s.E;
  const Eigen::MatrixXd r2 = s.Z - s.J;
  const Eigen::MatrixXd r3 = s.Z - s.W;
  s.Gamma1 += s.mu * r1;
  s.Gamma2 += s.mu * r2;
  s.Gamma3 += s.mu * r3;
  s.mu = std::min(cfg.mu_max, cfg.rho * s.mu);
  return {inf_norm(r1), inf_norm(r2), inf_norm(r3)};
}

LraSolution solve(const Eigen::MatrixXd& X, const LaplacianPrior& prior, const SolverConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = X.rows();
  const Eigen::Index n = X.cols();
  if (n < 1) throw ContractError("solve: empty block");
  if (prior.G_pinv.rows() != n || prior.G_pinv.cols() != n) {
    throw ContractError("solve: prior is " + std::to_string(prior.G_pinv.rows()) + "x" +
                        std::to_string(prior.G_pinv.cols()) + ", block has " + std::to_string(n) +
                        " pixels");
  }

  const Eigen::MatrixXd XtX = X.transpose() * X;
  Eigen::MatrixXd z_lhs = XtX;
  z_lhs.diagonal().array() += 2.0;
  const Eigen::LLT<Eigen::MatrixXd> z_factor(z_lhs);
  const SymmetricSylvester sylvester(2.0 * cfg.gamma * XtX, prior.G_pinv);

  LraState s = LraState::zeros(d, n, cfg.mu0);
  LraSolution out;
  out.trace.reserve(static_cast<std::size_t>(cfg.max_iters));
  const auto nn = static_cast<std::size_t>(n * n);

  while (s.iter < cfg.max_iters) {
    const double mu = s.mu;
    s.W = svt(s.Z + s.Gamma3 / mu, 1.0 / mu, cfg.svt_max_rank);

    s.Z = z_factor.solve(X.transpose() * (X - s.E + s.Gamma1 / mu) + s.J + s.W -
                         (s.Gamma2 + s.Gamma3) / mu);
    simd::clamp_nonnegative(s.Z.data(), nn);
    require_finite(s.Z, "Z", s.iter);

    s.E = prox_l21(X - X * s.Z + s.Gamma1 / mu, cfg.lambda / mu);

    const Eigen::MatrixXd M = s.Z + s.Gamma2 / mu;
    const Eigen::MatrixXd range = sylvester.solve(M, mu, NullSpaceCompletion::kZero);
    s.J = cfg.completion == NullSpaceCompletion::kSubproblem ? Eigen::MatrixXd(range + sylvester.null_part(M))
                                                             : range;
    require_finite(s.J, "J", s.iter);

    TraceEntry entry;
    entry.iter = s.iter + 1;
    entry.mu = mu;
    if (cfg.track_sylvester_residual) {
      entry.sylvester_residual = sylvester.relative_residual(range, M, mu);
      entry.sylvester_backward_error = sylvester.backward_error(range, M, mu);
    }
    entry.residuals = update_multipliers(s, X, cfg);
    ++s.iter;
    out.trace.push_back(entry);
    if (entry.residuals.max() <= cfg.epsilon) {
      out.converged = true;
      break;
    }
  }
  out.Z = std::move(s.Z);
  out.E = std::move(s.E);
  out.denoised = X * out.Z;
  require_finite(out.denoised, "X Z", s.iter);
  return out;
}

LraSolution solve(const SuperpixelBlock& block, const LaplacianPrior& prior,
                  const SolverConfig& cfg) {
  return solve(block.X, prior, cfg);
}

double lra_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& E,
                     const Eigen::MatrixXd& G, double lambda, double gamma) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Z);
  const double nuclear = svd.singularValues().sum();
  const double l21 = E.colwise().norm().sum();
  const Eigen::MatrixXd XZ = X * Z;
  return nuclear + lambda * l21 + gamma * (XZ * G * XZ.transpose()).trace();
}

void write_residual_trace(const std::filesystem::path& path, const LraSolution& solution) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "iter,res1,res2,res3,mu\n";
  char buf[160];
  for (const auto& t : solution.trace) {
    std::snprintf(buf, sizeof buf, "%d,%.9e,%.9e,%.9e,%.9e\n", t.iter, t.residuals.reconstruction,
                  t.residuals.z_minus_j, t.residuals.z_minus_w, t.mu);
    out << buf;
  }
}

}  // namespace slap
