#include "slap/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "slap/binary_io.hpp"
#include "slap/error.hpp"
#include "slap/key_value.hpp"
#include "slap/rng.hpp"

namespace slap {

namespace fs = std::filesystem;

namespace {

// Independent streams for the per-trial random draws.
constexpr std::uint64_t kCandidateStream = 0x9e3779b97f4a7c15ull;
constexpr std::uint64_t kAblationStream = 0xbf58476d1ce4e5b9ull;
constexpr const char* kSolveHeader = "SLAP-SOLVE v1\n";

std::string fmt_double(double v) {
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string fmt_fixed(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("config: '" + key + "' must be a finite number, got '" + value + "'");
  }
}

long long to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("config: '" + key + "' must be an integer, got '" + value + "'");
  }
}

std::vector<double> to_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(to_double(key, trim(tok)));
  if (out.empty()) throw ConfigError("config: '" + key + "' needs at least one value");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("config: '" + key + "' must be 0/1/true/false, got '" + value + "'");
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string hash_text(const std::string& text) { return hex(fnv1a(text.data(), text.size())); }

std::string cube_fingerprint(const HsiCube& cube) {
  std::uint64_t h = fnv1a(cube.data.data(), cube.data.size() * sizeof(float));
  const int dims[3] = {cube.height, cube.width, cube.bands};
  return hex(fnv1a(dims, sizeof dims, h));
}

std::string gt_fingerprint(const GroundTruth& gt) {
  std::uint64_t h = fnv1a(gt.labels.data(), gt.labels.size() * sizeof(int));
  const int dims[2] = {gt.height, gt.width};
  return hex(fnv1a(dims, sizeof dims, h));
}

std::vector<Eigen::MatrixXd> coefficients_of(const std::vector<LraSolution>& solutions) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(solutions.size());
  for (const auto& s : solutions) out.push_back(s.Z);
  return out;
}

std::vector<int> predict_all(const Classifier& model, const FeatureTable& features) {
  const std::vector<int> rows = model.predict(features);
  std::vector<int> out(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) out[features.pixel_map[i]] = rows[i];
  return out;
}

void check_classes(const PipelineConfig& cfg, const GroundTruth& gt) {
  if (cfg.r >= gt.classes) {
    throw ConfigError("r = " + std::to_string(cfg.r) + " needs at least r+1 classes, data has " +
                      std::to_string(gt.classes));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_indices(const fs::path& path, const TrainTestSplit& split) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t p : split.train) out << "train," << p << '\n';
  for (std::size_t p : split.test) out << "test," << p << '\n';
}

TrainTestSplit read_indices(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  TrainTestSplit split;
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::size_t p = std::stoull(line.substr(comma + 1));
    (line.compare(0, comma, "train") == 0 ? split.train : split.test).push_back(p);
  }
  return split;
}

void write_labels(const fs::path& path, const PartialLabeledSet& set, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < set.size(); ++i) out << set.entries[i].pixel << ',' << labels[i] << '\n';
}

void read_labels(const fs::path& path, std::vector<std::size_t>& pixels, std::vector<int>& labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    pixels.push_back(std::stoull(line.substr(0, comma)));
    labels.push_back(std::stoi(line.substr(comma + 1)));
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (k_target < 1) throw ConfigError("K must be >= 1");
  if (compactness < 0.0) throw ConfigError("compactness must be >= 0");
  if (slic_iterations < 1) throw ConfigError("slic_iterations must be >= 1");
  if (laplacian.k_neighbors < 1) throw ConfigError("knn must be >= 1");
  solver.validate();
  if (!(propagation.alpha > 0.0 && propagation.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (propagation.max_rounds < 1) throw ConfigError("prop_rounds must be >= 1");
  if (!(propagation.tol > 0.0)) throw ConfigError("prop_tol must be > 0");
  if (r < 0) throw ConfigError("r must be >= 0");
  if (!(train_percent > 0.0 && train_percent < 1.0)) throw ConfigError("train_percent must lie in (0, 1)");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (!(svm.C > 0.0)) throw ConfigError("svm_c must be > 0");
  if (!(svm.tol > 0.0)) throw ConfigError("svm_tol must be > 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

PipelineConfig parse_config(std::istream& in, const fs::path& base_dir, const std::string& source) {
  KeyValues kv;
  try {
    kv = parse_key_values(in, source);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  PipelineConfig cfg;
  const auto path_of = [&](const std::string& v) {
    const fs::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  };
  for (const auto& [key, value] : kv) {
    if (key == "cube") cfg.cube = path_of(value);
    else if (key == "ground_truth") cfg.ground_truth = path_of(value);
    else if (key == "K") cfg.k_target = static_cast<int>(to_int(key, value));
    else if (key == "compactness") cfg.compactness = to_double(key, value);
    else if (key == "slic_iterations") cfg.slic_iterations = static_cast<int>(to_int(key, value));
    else if (key == "segment_features") {
      if (value == "intensity") cfg.segment_features = SegmentFeatures::kIntensity;
      else if (value == "spectral") cfg.segment_features = SegmentFeatures::kSpectral;
      else throw ConfigError("config: segment_features must be intensity or spectral");
    } else if (key == "knn") cfg.laplacian.k_neighbors = static_cast<int>(to_int(key, value));
    else if (key == "laplacian_sigma") cfg.laplacian.sigma = to_double(key, value);
    else if (key == "lambda") cfg.solver.lambda = to_double(key, value);
    else if (key == "gamma") cfg.solver.gamma = to_double(key, value);
    else if (key == "mu0") cfg.solver.mu0 = to_double(key, value);
    else if (key == "mu_max") cfg.solver.mu_max = to_double(key, value);
    else if (key == "rho") cfg.solver.rho = to_double(key, value);
    else if (key == "epsilon") cfg.solver.epsilon = to_double(key, value);
    else if (key == "max_iters") cfg.solver.max_iters = static_cast<int>(to_int(key, value));
    else if (key == "svt_max_rank") cfg.solver.svt_max_rank = static_cast<int>(to_int(key, value));
    else if (key == "null_space_completion") {
      if (value == "subproblem") cfg.solver.completion = NullSpaceCompletion::kSubproblem;
      else if (value == "zero") cfg.solver.completion = NullSpaceCompletion::kZero;
      else throw ConfigError("config: null_space_completion must be subproblem or zero");
    } else if (key == "alpha") cfg.propagation.alpha = to_double(key, value);
    else if (key == "prop_rounds") cfg.propagation.max_rounds = static_cast<int>(to_int(key, value));
    else if (key == "prop_tol") cfg.propagation.tol = to_double(key, value);
    else if (key == "r") cfg.r = static_cast<int>(to_int(key, value));
    else if (key == "train_percent") cfg.train_percent = to_double(key, value);
    else if (key == "seed") {
      const long long s = to_int(key, value);
      if (s < 0) throw ConfigError("config: seed must be non-negative");
      cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "trials") cfg.trials = static_cast<int>(to_int(key, value));
    else if (key == "label_source") {
      if (value == "disambiguated") cfg.label_source = LabelSource::kDisambiguated;
      else if (value == "random_candidate") cfg.label_source = LabelSource::kRandomCandidate;
      else throw ConfigError("config: label_source must be disambiguated or random_candidate");
    } else if (key == "classifier") {
      if (value == "svm") cfg.classifier = ClassifierKind::kSvm;
      else if (value == "nn") cfg.classifier = ClassifierKind::kNearestNeighbor;
      else throw ConfigError("config: classifier must be svm or nn");
    } else if (key == "svm_c") cfg.svm.C = to_double(key, value);
    else if (key == "svm_sigma") cfg.svm.sigma = to_double(key, value);
    else if (key == "svm_tol") cfg.svm.tol = to_double(key, value);
    else if (key == "out_dir") cfg.out_dir = path_of(value);
    else if (key == "workers") cfg.workers = static_cast<int>(to_int(key, value));
    else if (key == "dump_residuals") cfg.dump_residuals = to_bool(key, value);
    else if (key == "sweep_lambda") cfg.sweep_lambda = to_list(key, value);
    else if (key == "sweep_gamma") cfg.sweep_gamma = to_list(key, value);
    else throw ConfigError(source + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, path.parent_path(), path.string());
}

std::string format_config(const PipelineConfig& cfg) {
  std::ostringstream o;
  o << "cube=" << cfg.cube.string() << "\nground_truth=" << cfg.ground_truth.string()
    << "\nK=" << cfg.k_target << "\ncompactness=" << fmt_double(cfg.compactness)
    << "\nslic_iterations=" << cfg.slic_iterations << "\nsegment_features="
    << (cfg.segment_features == SegmentFeatures::kSpectral ? "spectral" : "intensity")
    << "\nknn=" << cfg.laplacian.k_neighbors << "\nlaplacian_sigma=" << fmt_double(cfg.laplacian.sigma)
    << "\nlambda=" << fmt_double(cfg.solver.lambda) << "\ngamma=" << fmt_double(cfg.solver.gamma)
    << "\nmu0=" << fmt_double(cfg.solver.mu0) << "\nmu_max=" << fmt_double(cfg.solver.mu_max)
    << "\nrho=" << fmt_double(cfg.solver.rho) << "\nepsilon=" << fmt_double(cfg.solver.epsilon)
    << "\nmax_iters=" << cfg.solver.max_iters << "\nsvt_max_rank=" << cfg.solver.svt_max_rank
    << "\nnull_space_completion="
    << (cfg.solver.completion == NullSpaceCompletion::kZero ? "zero" : "subproblem")
    << "\nalpha=" << fmt_double(cfg.propagation.alpha) << "\nprop_rounds=" << cfg.propagation.max_rounds
    << "\nprop_tol=" << fmt_double(cfg.propagation.tol) << "\nr=" << cfg.r
    << "\ntrain_percent=" << fmt_double(cfg.train_percent) << "\nseed=" << cfg.seed
    << "\ntrials=" << cfg.trials << "\nlabel_source="
    << (cfg.label_source == LabelSource::kRandomCandidate ? "random_candidate" : "disambiguated")
    << "\nclassifier=" << (cfg.classifier == ClassifierKind::kNearestNeighbor ? "nn" : "svm")
    << "\nsvm_c=" << fmt_double(cfg.svm.C) << "\nsvm_sigma=" << fmt_double(cfg.svm.sigma)
    << "\nsvm_tol=" << fmt_double(cfg.svm.tol) << "\n";
  return o.str();
}

Dataset load_dataset(const PipelineConfig& cfg) {
  if (cfg.cube.empty() || cfg.ground_truth.empty()) {
    throw ConfigError("config needs both 'cube' and 'ground_truth'");
  }
  Dataset d;
  d.cube = load_cube(cfg.cube);
  d.gt = load_ground_truth(cfg.ground_truth, d.cube);
  return d;
}

Segmentation compute_segmentation(const HsiCube& cube, const PipelineConfig& cfg) {
  const FeatureRaster base = cfg.segment_features == SegmentFeatures::kSpectral
                                 ? compute_spectral_features(cube)
                                 : compute_base_image(cube);
  return segment(base, cfg.k_target, {cfg.compactness, cfg.slic_iterations});
}

std::vector<LraSolution> solve_superpixels(const PixelGrouping& grouping, const PipelineConfig& cfg) {
  const std::size_t n = grouping.blocks.size();
  std::vector<LraSolution> solutions(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        const LaplacianPrior prior = build_laplacian(grouping.blocks[k], cfg.laplacian);
        solutions[k] = solve(grouping.blocks[k], prior, cfg.solver);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), n));
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return solutions;
}

Disambiguation disambiguate_trial(const GroundTruth& gt, const PixelGrouping& grouping,
                                  const std::vector<Eigen::MatrixXd>& coefficients,
                                  const PipelineConfig& cfg, std::uint64_t seed) {
  check_classes(cfg, gt);
  Disambiguation d;
  d.split = split_train_test(gt, cfg.train_percent, seed);
  d.candidates = generate_candidates(d.split.train, gt, cfg.r, seed ^ kCandidateStream);
  const TrainingAffinity affinity =
      assemble_affinity(coefficients, training_index(d.candidates, grouping));
  const PropagationResult prop =
      propagate(init_confidence(d.candidates), affinity.G_tr, d.candidates, cfg.propagation);
  d.propagation_rounds = prop.rounds;
  d.resolved = disambiguate(prop.Q, d.candidates);
  d.accuracy = disambiguation_accuracy(d.resolved, d.candidates);
  if (cfg.label_source == LabelSource::kRandomCandidate) {
    Rng rng(seed ^ kAblationStream);
    for (const auto& e : d.candidates.entries) {
      d.training_labels.push_back(e.candidates[rng.below(e.candidates.size())]);
    }
  } else {
    d.training_labels = d.resolved;
  }
  return d;
}

std::unique_ptr<Classifier> make_classifier(const PipelineConfig& cfg) {
  if (cfg.classifier == ClassifierKind::kNearestNeighbor) {
    return std::make_unique<NearestNeighborClassifier>();
  }
  return std::make_unique<SvmClassifier>(cfg.svm);
}

std::string format_aggregate(const PipelineConfig& cfg, const std::vector<TrialOutcome>& trials) {
  std::ostringstream o;
  int failed = 0;
  for (const auto& t : trials) failed += !t.ok;
  o << "trials=" << trials.size() << "\nfailed=" << failed << "\nr=" << cfg.r
    << "\ntrain_percent=" << fmt_double(cfg.train_percent) << "\nlambda=" << fmt_double(cfg.solver.lambda)
    << "\ngamma=" << fmt_double(cfg.solver.gamma) << "\nalpha=" << fmt_double(cfg.propagation.alpha)
    << "\nK=" << cfg.k_target << '\n';
  std::vector<double> oa, aa, kappa, dis;
  for (const auto& t : trials) {
    const std::string prefix = "trial_" + std::to_string(t.trial) + "_";
    o << prefix << "seed=" << t.seed << '\n';
    if (!t.ok) {
      std::string msg = t.error;
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      o << prefix << "status=failed: " << msg << '\n';
      continue;
    }
    o << prefix << "status=ok\n"
      << prefix << "oa=" << fmt_fixed(t.report.oa) << '\n'
      << prefix << "aa=" << fmt_fixed(t.report.aa) << '\n'
      << prefix << "kappa=" << fmt_fixed(t.report.kappa) << '\n'
      << prefix << "disambiguation_accuracy=" << fmt_fixed(t.disambiguation_accuracy) << '\n';
    oa.push_back(t.report.oa);
    aa.push_back(t.report.aa);
    kappa.push_back(t.report.kappa);
    dis.push_back(t.disambiguation_accuracy);
  }
  // Sample standard deviation (n - 1); 0 for a single trial.
  const auto summary = [&](const std::string& name, const std::vector<double>& v) {
    double mean = std::nan(""), sd = std::nan("");
    if (!v.empty()) {
      mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    }
    o << name << "_mean=" << fmt_fixed(mean) << '\n' << name << "_std=" << fmt_fixed(sd) << '\n';
  };
  summary("oa", oa);
  summary("aa", aa);
  summary("kappa", kappa);
  summary("disambiguation_accuracy", dis);
  return o.str();
}

fs::path run_pipeline(const PipelineConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  check_classes(cfg, data.gt);
  fs::create_directories(out_dir);

  const Segmentation seg = compute_segmentation(data.cube, cfg);
  write_segmentation(out_dir / "segmentation.txt", seg);
  const PixelGrouping grouping = group_pixels(data.cube, seg);
  const std::vector<LraSolution> solutions = solve_superpixels(grouping, cfg);
  if (cfg.dump_residuals) {
    fs::create_directories(out_dir / "residuals");
    for (std::size_t k = 0; k < solutions.size(); ++k) {
      write_residual_trace(out_dir / "residuals" / ("sp_" + std::to_string(k) + ".csv"), solutions[k]);
    }
  }
  const std::vector<Eigen::MatrixXd> coefficients = coefficients_of(solutions);
  const FeatureTable features = reassemble_denoised(solutions, grouping.blocks);

  std::vector<TrialOutcome> outcomes;
  for (int t = 1; t <= cfg.trials; ++t) {
    TrialOutcome outcome;
    outcome.trial = t;
    outcome.seed = trial_seed(cfg, t);
    const fs::path trial_dir = out_dir / ("trial_" + std::to_string(t));
    try {
      fs::create_directories(trial_dir);
      const Disambiguation dis = disambiguate_trial(data.gt, grouping, coefficients, cfg, outcome.seed);
      write_candidates(trial_dir / "candidates.csv", dis.candidates);
      write_disambiguated(trial_dir / "disambiguated.csv", dis.candidates, dis.resolved);
      auto model = make_classifier(cfg);
      model->train(features.select_pixels(dis.split.train), dis.training_labels);
      const std::vector<int> predictions = predict_all(*model, features);
      outcome.report = evaluate(predictions, data.gt, dis.split.test);
      outcome.map = render_map(predictions, data.gt);
      outcome.disambiguation_accuracy = dis.accuracy;
      write_report(trial_dir / "report.txt", outcome.report);
      write_pixmap(trial_dir / "map.ppm", outcome.map);
      outcome.ok = true;
    } catch (const Error& e) {
      outcome.error = e.what();
    }
    outcomes.push_back(std::move(outcome));
  }
  const fs::path aggregate = out_dir / "aggregate.txt";
  write_text(aggregate, format_aggregate(cfg, outcomes));
  return aggregate;
}

std::optional<Stage> parse_stage(const std::string& name) {
  for (Stage s : {Stage::kSegment, Stage::kSolve, Stage::kDisambiguate, Stage::kTrain, Stage::kEvaluate}) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::kSegment: return "segment";
    case Stage::kSolve: return "solve";
    case Stage::kDisambiguate: return "disambiguate";
    case Stage::kTrain: return "train";
    case Stage::kEvaluate: return "evaluate";
  }
  return "unknown";
}

std::string stage_key(Stage stage, const PipelineConfig& cfg, const Dataset& data) {
  std::string text = "segment v1|cube=" + cube_fingerprint(data.cube) + "|K=" +
                     std::to_string(cfg.k_target) + "|compactness=" + fmt_double(cfg.compactness) +
                     "|iters=" + std::to_string(cfg.slic_iterations) + "|features=" +
                     std::to_string(static_cast<int>(cfg.segment_features));
  std::string key = hash_text(text);
  if (stage == Stage::kSegment) return key;
  const auto& s = cfg.solver;
  text = key + "|solve v1|knn=" + std::to_string(cfg.laplacian.k_neighbors) + "|lsigma=" +
         fmt_double(cfg.laplacian.sigma) + "|lambda=" + fmt_double(s.lambda) + "|gamma=" +
         fmt_double(s.gamma) + "|mu0=" + fmt_double(s.mu0) + "|mu_max=" + fmt_double(s.mu_max) +
         "|rho=" + fmt_double(s.rho) + "|eps=" + fmt_double(s.epsilon) + "|iters=" +
         std::to_string(s.max_iters) + "|rank=" + std::to_string(s.svt_max_rank) + "|completion=" + std::to_string(static_cast<int>(s.completion));
  key = hash_text(text);
  if (stage == Stage::kSolve) return key;
  text = key + "|disambiguate v1|gt=" + gt_fingerprint(data.gt) + "|pct=" +
         fmt_double(cfg.train_percent) + "|r=" + std::to_string(cfg.r) + "|seed=" +
         std::to_string(trial_seed(cfg, 1)) + "|alpha=" + fmt_double(cfg.propagation.alpha) +
         "|rounds=" + std::to_string(cfg.propagation.max_rounds) + "|tol=" +
         fmt_double(cfg.propagation.tol) + "|source=" + std::to_string(static_cast<int>(cfg.label_source));
  key = hash_text(text);
  if (stage == Stage::kDisambiguate) return key;
  text = key + "|train v1|classifier=" + std::to_string(static_cast<int>(cfg.classifier)) + "|C=" +
         fmt_double(cfg.svm.C) + "|sigma=" + fmt_double(cfg.svm.sigma) + "|tol=" + fmt_double(cfg.svm.tol);
  key = hash_text(text);
  if (stage == Stage::kTrain) return key;
  return hash_text(key + "|evaluate v1");
}

void write_solutions(const fs::path& path, const std::vector<LraSolution>& solutions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << kSolveHeader;
  binary::write_u64(out, solutions.size());
  for (const auto& s : solutions) {
    binary::write_u64(out, static_cast<std::uint64_t>(s.Z.rows()));
    binary::write_u64(out, static_cast<std::uint64_t>(s.denoised.rows()));
    binary::write_u64(out, s.converged ? 1 : 0);
    binary::write_u64(out, static_cast<std::uint64_t>(s.iterations()));
    for (Eigen::Index i = 0; i < s.Z.size(); ++i) binary::write_f64(out, s.Z.data()[i]);
    for (Eigen::Index i = 0; i < s.denoised.size(); ++i) binary::write_f64(out, s.denoised.data()[i]);
  }
}

CachedSolutions read_solutions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  binary::expect_header(in, kSolveHeader);
  CachedSolutions c;
  const auto k = binary::read_count(in);
  for (std::uint64_t b = 0; b < k; ++b) {
    const auto n = static_cast<Eigen::Index>(binary::read_count(in, 1u << 20));
    const auto d = static_cast<Eigen::Index>(binary::read_count(in, 1u << 20));
    binary::read_u64(in);
    binary::read_u64(in);
    Eigen::MatrixXd Z(n, n), D(d, n);
    for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = binary::read_f64(in);
    for (Eigen::Index i = 0; i < D.size(); ++i) D.data()[i] = binary::read_f64(in);
    c.Z.push_back(std::move(Z));
    c.denoised.push_back(std::move(D));
  }
  return c;
}

StageResult run_stage(Stage stage, const PipelineConfig& cfg, const fs::path& cache_dir) {
  cfg.validate();
  const Dataset data = load_dataset(cfg);
  check_classes(cfg, data.gt);
  fs::create_directories(cache_dir);
  const auto key_path = [&](Stage s) { return cache_dir / (stage_name(s) + ".key"); };

  for (int up = 0; up < static_cast<int>(stage); ++up) {
    const auto s = static_cast<Stage>(up);
    const std::string stored = read_text(key_path(s));
    if (stored.empty()) {
      throw PrerequisiteError("stage '" + stage_name(stage) + "' needs the '" + stage_name(s) +
                              "' artifact in " + cache_dir.string() + "; run `" + stage_name(s) +
                              "` first");
    }
    if (stored != stage_key(s, cfg, data)) {
      throw PrerequisiteError("stale cache: the '" + stage_name(s) + "' artifact in " +
                              cache_dir.string() +
                              " was built with different parameters; re-run `" + stage_name(s) +
                              "` and the stages after it");
    }
  }

  StageResult result{stage, false, stage_key(stage, cfg, data), {}};
  const auto done = [&](std::vector<fs::path> artifacts) {
    result.artifacts = std::move(artifacts);
    return result;
  };
  const fs::path seg_path = cache_dir / "segmentation.txt";
  const fs::path solve_path = cache_dir / "solve.bin";
  const fs::path split_path = cache_dir / "split.csv";
  const fs::path cand_path = cache_dir / "candidates.csv";
  const fs::path dis_path = cache_dir / "disambiguated.csv";
  const fs::path labels_path = cache_dir / "train_labels.csv";
  const fs::path model_path = cache_dir / "model.bin";
  const fs::path report_path = cache_dir / "report.txt";
  const fs::path map_path = cache_dir / "map.ppm";
  std::vector<fs::path> artifacts;
  switch (stage) {
    case Stage::kSegment: artifacts = {seg_path}; break;
    case Stage::kSolve: artifacts = {solve_path}; break;
    case Stage::kDisambiguate: artifacts = {split_path, cand_path, dis_path, labels_path}; break;
    case Stage::kTrain: artifacts = {model_path}; break;
    case Stage::kEvaluate: artifacts = {report_path, map_path}; break;
  }
  if (read_text(key_path(stage)) == result.key &&
      std::all_of(artifacts.begin(), artifacts.end(), [](const fs::path& p) { return fs::exists(p); })) {
    result.cache_hit = true;
    return done(artifacts);
  }
  // Drop the old key first so an interrupted run never looks complete.
  fs::remove(key_path(stage));

  const auto load_grouping = [&] {
    return group_pixels(data.cube, segmentation_from_raster(read_label_raster(seg_path)));
  };
  switch (stage) {
    case Stage::kSegment:
      write_segmentation(seg_path, compute_segmentation(data.cube, cfg));
      break;
    case Stage::kSolve: {
      const PixelGrouping grouping = load_grouping();
      const auto solutions = solve_superpixels(grouping, cfg);
      write_solutions(solve_path, solutions);
      if (cfg.dump_residuals) {
        fs::create_directories(cache_dir / "residuals");
        for (std::size_t k = 0; k < solutions.size(); ++k) {
          write_residual_trace(cache_dir / "residuals" / ("sp_" + std::to_string(k) + ".csv"),
                               solutions[k]);
        }
      }
      break;
    }
    case Stage::kDisambiguate: {
      const PixelGrouping grouping = load_grouping();
      const CachedSolutions cached = read_solutions(solve_path);
      const Disambiguation dis = disambiguate_trial(data.gt, grouping, cached.Z, cfg, trial_seed(cfg, 1));
      write_indices(split_path, dis.split);
      write_candidates(cand_path, dis.candidates);
      write_disambiguated(dis_path, dis.candidates, dis.resolved);
      write_labels(labels_path, dis.candidates, dis.training_labels);
      break;
    }
    case Stage::kTrain: {
      const PixelGrouping grouping = load_grouping();
      const FeatureTable features = reassemble_denoised(read_solutions(solve_path).denoised, grouping.blocks);
      std::vector<std::size_t> pixels;
      std::vector<int> labels;
      read_labels(labels_path, pixels, labels);
      auto model = make_classifier(cfg);
      model->train(features.select_pixels(pixels), labels);
      model->save(model_path);
      break;
    }
    case Stage::kEvaluate: {
      const PixelGrouping grouping = load_grouping();
      const FeatureTable features = reassemble_denoised(read_solutions(solve_path).denoised, grouping.blocks);
      const auto model = load_classifier(model_path);
      const std::vector<int> predictions = predict_all(*model, features);
      const TrainTestSplit split = read_indices(split_path);
      write_report(report_path, evaluate(predictions, data.gt, split.test));
      write_pixmap(map_path, render_map(predictions, data.gt));
      break;
    }
  }
  write_text(key_path(stage), result.key);
  return done(artifacts);
}

fs::path run_sweep(const PipelineConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "lambda,gamma,oa_mean,oa_std,aa_mean,kappa_mean,disambiguation_accuracy_mean\n";
  for (double lambda : cfg.sweep_lambda) {
    for (double gamma : cfg.sweep_gamma) {
      PipelineConfig point = cfg;
      point.solver.lambda = lambda;
      point.solver.gamma = gamma;
      const fs::path dir = out_dir / ("lambda_" + fmt_double(lambda) + "_gamma_" + fmt_double(gamma));
      const KeyValues agg = read_key_values(run_pipeline(point, dir));
      const auto get = [&](const std::string& k) {
        const auto it = agg.find(k);
        return it == agg.end() ? std::string("nan") : it->second;
      };
      csv << fmt_double(lambda) << ',' << fmt_double(gamma) << ',' << get("oa_mean") << ','
          << get("oa_std") << ',' << get("aa_mean") << ',' << get("kappa_mean") << ','
          << get("disambiguation_accuracy_mean") << '\n';
    }
  }
  const fs::path path = out_dir / "sweep.csv";
  write_text(path, csv.str());
  return path;
}

}  // namespace slap
