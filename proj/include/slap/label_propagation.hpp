#pragma once

// Training-pixel affinity graph from the per-superpixel coefficient matrices,
// confidence propagation over it, and candidate-restricted disambiguation.

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "slap/hsi_data.hpp"
#include "slap/superpixel.hpp"

namespace slap {

struct TrainingAffinity {
  Eigen::MatrixXd Z_tr;  // p x p, column-normalized, zero across superpixels
  Eigen::MatrixXd G_tr;  // (Z_tr + Z_tr^T) / 2
};

// p x c, row i supported on the candidate set of training pixel i.
using ConfidenceMatrix = Eigen::MatrixXd;

struct PropagationOptions {
  double alpha = 0.96;
  int max_rounds = 100;
  double tol = 1e-6;
};

struct PropagationResult {
  ConfidenceMatrix Q;
  int rounds = 0;
  bool converged = false;
};

/// Z_tr[i,j] = Z_D[v_i, v_j] when training pixels i and j share superpixel
/// D, else 0. Non-zero columns are scaled to unit l2 norm, then symmetrized.
/// `coefficients[k]` is the coefficient matrix of superpixel k.
TrainingAffinity assemble_affinity(const std::vector<Eigen::MatrixXd>& coefficients,
                                   const std::vector<BlockRef>& training_index);

/// Looks up (superpixel, column) of each training pixel.
std::vector<BlockRef> training_index(const PartialLabeledSet& set, const PixelGrouping& grouping);

/// Uniform confidence 1/|C_i| over each candidate set.
ConfidenceMatrix init_confidence(const PartialLabeledSet& set);

/// Q~(t) = (1 - alpha) Q(0) + alpha G_tr Q(t-1), then each row rescaled to
/// sum to 1 over its candidates (non-candidates zeroed). A row whose
/// candidate mass vanishes reverts to its Q(0) row. Stops when the largest
/// entry change falls below tol or after max_rounds.
PropagationResult propagate(const ConfidenceMatrix& Q0, const Eigen::MatrixXd& G_tr,
                            const PartialLabeledSet& set, const PropagationOptions& options = {});

/// argmax over each candidate set, ties to the smallest label.
std::vector<int> disambiguate(const ConfidenceMatrix& Q, const PartialLabeledSet& set);

/// Fraction of entries whose resolved label equals the hidden true label.
double disambiguation_accuracy(const std::vector<int>& resolved, const PartialLabeledSet& set);

// Candidate CSV with a fourth `resolved_label` field.
void write_disambiguated(const std::filesystem::path& path, const PartialLabeledSet& set,
                         const std::vector<int>& resolved);
// Returns the candidate set and fills `resolved`.
PartialLabeledSet read_disambiguated(const std::filesystem::path& path, int classes,
                                     std::vector<int>& resolved);

}  // namespace slap
