#pragma once

// End-to-end orchestration: segment, solve each superpixel, disambiguate the
// candidate labels, train, predict and evaluate, with per-stage caching and
// repeated trials.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "slap/classifier.hpp"
#include "slap/evaluation.hpp"
#include "slap/graph_prior.hpp"
#include "slap/hsi_data.hpp"
#include "slap/label_propagation.hpp"
#include "slap/lra_solver.hpp"
#include "slap/superpixel.hpp"

namespace slap {

enum class SegmentFeatures { kIntensity, kSpectral };
enum class LabelSource { kDisambiguated, kRandomCandidate };
enum class ClassifierKind { kSvm, kNearestNeighbor };

struct PipelineConfig {
  std::filesystem::path cube;          // header path
  std::filesystem::path ground_truth;  // ASCII raster

  int k_target = 64;
  double compactness = 0.1;
  int slic_iterations = 10;
  SegmentFeatures segment_features = SegmentFeatures::kIntensity;

  LaplacianOptions laplacian;
  SolverConfig solver{.lambda = 1.0, .gamma = 20.0};

  PropagationOptions propagation;
  int r = 1;
  double train_percent = 0.05;
  std::uint64_t seed = 0;
  int trials = 1;
  // Training labels: disambiguated, or one candidate picked uniformly at
  // random per pixel (ablation baseline).
  LabelSource label_source = LabelSource::kDisambiguated;

  ClassifierKind classifier = ClassifierKind::kSvm;
  SvmOptions svm;

  std::filesystem::path out_dir = "slap_out";
  int workers = 1;
  bool dump_residuals = false;

  std::vector<double> sweep_lambda{0.01, 0.1, 1.0};
  std::vector<double> sweep_gamma{0, 0.001, 0.01, 0.1, 1, 2, 5, 10, 20, 50, 70, 100};

  // Range checks that do not need the data (r < c is checked after loading).
  void validate() const;
};

/// Parses `key=value` config text. Relative paths resolve against
/// `base_dir`. Unknown keys and bad values throw ConfigError.
PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                            const std::string& source_name = "config");
PipelineConfig load_config(const std::filesystem::path& path);
std::string format_config(const PipelineConfig& cfg);

// Seed of trial t (1-based).
inline std::uint64_t trial_seed(const PipelineConfig& cfg, int trial) {
  return cfg.seed + static_cast<std::uint64_t>(trial);
}

struct Dataset {
  HsiCube cube;
  GroundTruth gt;
};

Dataset load_dataset(const PipelineConfig& cfg);

Segmentation compute_segmentation(const HsiCube& cube, const PipelineConfig& cfg);

/// Solves every block on `cfg.workers` threads. Results are stored by
/// superpixel index, so the worker count never changes them.
std::vector<LraSolution> solve_superpixels(const PixelGrouping& grouping, const PipelineConfig& cfg);

struct Disambiguation {
  TrainTestSplit split;
  PartialLabeledSet candidates;
  std::vector<int> resolved;         // propagation + argmax
  std::vector<int> training_labels;  // what the classifier is fed
  double accuracy = 0.0;             // resolved vs hidden true labels
  int propagation_rounds = 0;
};

Disambiguation disambiguate_trial(const GroundTruth& gt, const PixelGrouping& grouping,
                                  const std::vector<Eigen::MatrixXd>& coefficients,
                                  const PipelineConfig& cfg, std::uint64_t seed);

std::unique_ptr<Classifier> make_classifier(const PipelineConfig& cfg);

struct TrialOutcome {
  int trial = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double disambiguation_accuracy = 0.0;
  EvalReport report;
  ColorMap map;
};

/// Runs every stage for each trial t = 1..trials with seed + t and writes
/// per-trial outputs plus `aggregate.txt` under `out_dir`. A failing trial is
/// recorded and the others continue. Returns the aggregate report path.
std::filesystem::path run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

std::string format_aggregate(const PipelineConfig& cfg, const std::vector<TrialOutcome>& trials);

enum class Stage { kSegment, kSolve, kDisambiguate, kTrain, kEvaluate };
std::optional<Stage> parse_stage(const std::string& name);
std::string stage_name(Stage stage);

struct StageResult {
  Stage stage;
  bool cache_hit = false;
  std::string key;
  std::vector<std::filesystem::path> artifacts;
};

/// Runs one stage against the artifacts cached in `cache_dir` (trial 1's
/// seed). Throws PrerequisiteError when an upstream artifact is missing or
/// was built with different parameters; reuses its own artifact when the
/// cache key matches.
StageResult run_stage(Stage stage, const PipelineConfig& cfg, const std::filesystem::path& cache_dir);

/// Cache key of each stage for this config and data. A key covers every
/// parameter that stage and its upstream stages read.
std::string stage_key(Stage stage, const PipelineConfig& cfg, const Dataset& data);

/// Grid over sweep_lambda x sweep_gamma; each point is a full run_pipeline
/// under `out_dir`, summarized in `sweep.csv`. Returns the CSV path.
std::filesystem::path run_sweep(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

// Solve-stage cache file.
void write_solutions(const std::filesystem::path& path, const std::vector<LraSolution>& solutions);
struct CachedSolutions {
  std::vector<Eigen::MatrixXd> Z;
  std::vector<Eigen::MatrixXd> denoised;
};
CachedSolutions read_solutions(const std::filesystem::path& path);

}  // namespace slap
