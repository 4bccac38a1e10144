#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "slap/error.hpp"
#include "slap/hsi_data.hpp"
#include "slap/key_value.hpp"
#include "slap/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "Config file (key=value)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", flags.out, "Output or cache directory (default: out_dir from the config)");
  cmd->add_option("--workers", flags.workers, "Worker threads for the solve stage")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", flags.seed, "Base seed, overrides the config");
}

slap::PipelineConfig resolve(const CommonFlags& flags, fs::path& out_dir) {
  slap::PipelineConfig cfg = slap::load_config(flags.config);
  if (flags.workers) cfg.workers = *flags.workers;
  if (flags.seed) cfg.seed = *flags.seed;
  cfg.validate();
  out_dir = flags.out.empty() ? cfg.out_dir : fs::path(flags.out);
  return cfg;
}

struct SynthFlags {
  std::string out = "synthetic";
  int height = 32;
  int width = 32;
  int bands = 16;
  int classes = 4;
  double sigma = 0.05;
  std::uint64_t seed = 1;
};

void write_synthetic(const SynthFlags& f) {
  const slap::SyntheticScene scene =
      slap::generate_synthetic_scene(f.height, f.width, f.bands, f.classes, f.sigma, f.seed);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  slap::write_cube(scene.cube, dir / "cube.hdr", "cube.raw");
  slap::write_label_raster(dir / "gt.txt", scene.gt.height, scene.gt.width, scene.gt.labels);
  slap::PipelineConfig cfg;
  cfg.cube = "cube.hdr";
  cfg.ground_truth = "gt.txt";
  cfg.k_target = std::max(1, f.height * f.width / 64);
  cfg.train_percent = 0.1;
  cfg.trials = 10;
  std::ofstream out(dir / "slap.cfg");
  out << "# synthetic scene " << f.height << "x" << f.width << ", " << f.bands << " bands, "
      << f.classes << " classes, noise " << f.sigma << ", seed " << f.seed << "\n"
      << slap::format_config(cfg) << "out_dir=run\n";
  std::printf("wrote %s/{cube.hdr,cube.raw,gt.txt,slap.cfg}\n", dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Superpixel low-rank denoising with partial-label disambiguation for hyperspectral images"};
  app.require_subcommand(1);

  CommonFlags pipeline_flags, sweep_flags;
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run every stage for each trial and aggregate");
  add_common(pipeline_cmd, pipeline_flags);
  auto* sweep_cmd = app.add_subcommand("sweep", "Run the pipeline over the lambda x gamma grid");
  add_common(sweep_cmd, sweep_flags);

  CommonFlags stage_flags;
  std::optional<slap::Stage> chosen;
  for (auto stage : {slap::Stage::kSegment, slap::Stage::kSolve, slap::Stage::kDisambiguate,
                     slap::Stage::kTrain, slap::Stage::kEvaluate}) {
    auto* cmd = app.add_subcommand(slap::stage_name(stage), "Run the " + slap::stage_name(stage) +
                                                                " stage against the cache directory");
    add_common(cmd, stage_flags);
    cmd->callback([&chosen, stage] { chosen = stage; });
  }

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic scene with a matching config");
  synth_cmd->add_option("--out", synth.out, "Output directory");
  synth_cmd->add_option("--height", synth.height)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--width", synth.width)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--bands", synth.bands)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--classes", synth.classes)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--sigma", synth.sigma, "Noise standard deviation")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    fs::path out_dir;
    if (pipeline_cmd->parsed()) {
      const auto cfg = resolve(pipeline_flags, out_dir);
      const fs::path report = slap::run_pipeline(cfg, out_dir);
      std::ifstream in(report);
      std::cout << in.rdbuf();
      const auto kv = slap::read_key_values(report);
      if (kv.at("failed") != "0") return 1;
    } else if (sweep_cmd->parsed()) {
      const auto cfg = resolve(sweep_flags, out_dir);
      std::printf("%s\n", slap::run_sweep(cfg, out_dir).string().c_str());
    } else if (synth_cmd->parsed()) {
      write_synthetic(synth);
    } else if (chosen) {
      const auto cfg = resolve(stage_flags, out_dir);
      const slap::StageResult r = slap::run_stage(*chosen, cfg, out_dir);
      std::printf("stage=%s\ncache=%s\nkey=%s\n", slap::stage_name(r.stage).c_str(),
                  r.cache_hit ? "hit" : "miss", r.key.c_str());
      for (const auto& a : r.artifacts) std::printf("artifact=%s\n", a.string().c_str());
    }
  } catch (const slap::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
