#include "slap/label_propagation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "slap/error.hpp"
#include "slap/key_value.hpp"

namespace slap {

TrainingAffinity assemble_affinity(const std::vector<Eigen::MatrixXd>& coefficients,
                                   const std::vector<BlockRef>& index) {
  const auto p = static_cast<Eigen::Index>(index.size());
  for (const BlockRef& ref : index) {
    if (ref.superpixel < 0 || ref.superpixel >= static_cast<int>(coefficients.size())) {
      throw DataError("training pixel refers to superpixel " + std::to_string(ref.superpixel) +
                      " of " + std::to_string(coefficients.size()));
    }
    const auto& Z = coefficients[ref.superpixel];
    if (ref.column < 0 || ref.column >= Z.cols()) {
      throw DataError("training pixel column " + std::to_string(ref.column) +
                      " outside superpixel " + std::to_string(ref.superpixel));
    }
  }
  TrainingAffinity a;
  a.Z_tr = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const BlockRef& rj = index[j];
    const auto& Z = coefficients[rj.superpixel];
    for (Eigen::Index i = 0; i < p; ++i) {
      if (index[i].superpixel == rj.superpixel) a.Z_tr(i, j) = Z(index[i].column, rj.column);
    }
    const double norm = a.Z_tr.col(j).norm();
    if (norm > 0.0) a.Z_tr.col(j) /= norm;
  }
  a.G_tr.resize(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < p; ++i) a.G_tr(i, j) = (a.Z_tr(i, j) + a.Z_tr(j, i)) / 2.0;
  }
  return a;
}

std::vector<BlockRef> training_index(const PartialLabeledSet& set, const PixelGrouping& grouping) {
  std::vector<BlockRef> out;
  out.reserve(set.size());
  for (const auto& e : set.entries) {
    if (e.pixel >= grouping.locate.size()) {
      throw DataError("training pixel " + std::to_string(e.pixel) + " outside the image");
    }
    out.push_back(grouping.locate[e.pixel]);
  }
  return out;
}

ConfidenceMatrix init_confidence(const PartialLabeledSet& set) {
  ConfidenceMatrix Q = ConfidenceMatrix::Zero(static_cast<Eigen::Index>(set.size()), set.classes);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& cands = set.entries[i].candidates;
    if (cands.empty()) throw DataError("training pixel " + std::to_string(i) + " has no candidates");
    for (int b : cands) {
      if (b < 1 || b > set.classes) throw DataError("candidate label out of range");
      Q(static_cast<Eigen::Index>(i), b - 1) = 1.0 / static_cast<double>(cands.size());
    }
  }
  return Q;
}

PropagationResult propagate(const ConfidenceMatrix& Q0, const Eigen::MatrixXd& G_tr,
                            const PartialLabeledSet& set, const PropagationOptions& options) {
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (options.max_rounds < 1) throw ConfigError("propagation needs max_rounds >= 1");
  const Eigen::Index p = Q0.rows();
  if (G_tr.rows() != p || G_tr.cols() != p || static_cast<Eigen::Index>(set.size()) != p) {
    throw ContractError("propagate: shapes of Q0, G_tr and the candidate set disagree");
  }
  PropagationResult result;
  result.Q = Q0;
  ConfidenceMatrix next(p, Q0.cols());
  for (int t = 1; t <= options.max_rounds; ++t) {
    next.noalias() = (1.0 - options.alpha) * Q0 + options.alpha * (G_tr * result.Q);
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto& cands = set.entries[i].candidates;
      double mass = 0.0;
      for (int b : cands) mass += next(i, b - 1);
      if (!(mass > 0.0) || !std::isfinite(mass)) {
        next.row(i) = Q0.row(i);
        continue;
      }
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(Q0.cols());
      for (int b : cands) row(b - 1) = next(i, b - 1) / mass;
      next.row(i) = row;
    }
    const double change = (next - result.Q).cwiseAbs().maxCoeff();
    result.Q.swap(next);
    result.rounds = t;
    if (change < options.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

std::vector<int> disambiguate(const ConfidenceMatrix& Q, const PartialLabeledSet& set) {
  std::vector<int> out;
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    int best = 0;
    double best_q = 0.0;
    // Candidates are ascending, so strict > keeps the smallest label on ties.
    for (int b : set.entries[i].candidates) {
      const double q = Q(static_cast<Eigen::Index>(i), b - 1);
      if (best == 0 || q > best_q) {
        best = b;
        best_q = q;
      }
    }
    out.push_back(best);
  }
  return out;
}

double disambiguation_accuracy(const std::vector<int>& resolved, const PartialLabeledSet& set) {
  if (resolved.size() != set.size()) throw ContractError("resolved label count mismatch");
  if (set.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.size(); ++i) hits += resolved[i] == set.entries[i].true_label;
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

void write_disambiguated(const std::filesystem::path& path, const PartialLabeledSet& set,
                         const std::vector<int>& resolved) {
  if (resolved.size() != set.size()) throw ContractError("resolved label count mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& e = set.entries[i];
    out << e.pixel << ',' << e.true_label << ',';
    for (std::size_t j = 0; j < e.candidates.size(); ++j) {
      if (j) out << ';';
      out << e.candidates[j];
    }
    out << ',' << resolved[i] << '\n';
  }
}

PartialLabeledSet read_disambiguated(const std::filesystem::path& path, int classes,
                                     std::vector<int>& resolved) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  PartialLabeledSet set;
  set.classes = classes;
  resolved.clear();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cut = line.rfind(',');
    if (cut == std::string::npos) throw DataError(path.string() + ": malformed line");
    std::istringstream head(line.substr(0, cut));
    PartialLabelEntry e;
    std::string pixel_s, truth_s, cands_s;
    std::getline(head, pixel_s, ',');
    std::getline(head, truth_s, ',');
    std::getline(head, cands_s, ',');
    try {
      e.pixel = std::stoull(pixel_s);
      e.true_label = std::stoi(truth_s);
      std::istringstream cs(cands_s);
      std::string tok;
      while (std::getline(cs, tok, ';')) e.candidates.push_back(std::stoi(tok));
      resolved.push_back(std::stoi(line.substr(cut + 1)));
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
    set.r = static_cast<int>(e.candidates.size()) - 1;
    set.entries.push_back(std::move(e));
  }
  return set;
}

}  // namespace slap
