#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <sys/wait.h>

#include "slap/key_value.hpp"
#include "support.hpp"

using slap::test::TempDir;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SLAP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("synth then pipeline succeeds") {
  TempDir dir("cli");
  const std::string d = dir.path().string();
  REQUIRE(run("synth --out " + d + " --height 12 --width 12 --bands 6") == 0);
  CHECK(std::filesystem::exists(dir / "cube.hdr"));
  CHECK(std::filesystem::exists(dir / "cube.raw"));
  CHECK(std::filesystem::exists(dir / "gt.txt"));
  CHECK(run("pipeline --config " + d + "/slap.cfg --out " + d + "/run --seed 5 --workers 2") == 0);
  const auto kv = slap::read_key_values(dir / "run" / "aggregate.txt");
  CHECK(kv.at("trial_1_seed") == "6");
}

TEST_CASE("exit codes") {
  TempDir dir("cli");
  const std::string d = dir.path().string();
  REQUIRE(run("synth --out " + d + " --height 12 --width 12 --bands 6") == 0);
  slap::test::spit(dir / "bad.cfg", "cube=cube.hdr\nground_truth=gt.txt\nalpha=2\n");
  CHECK(run("pipeline --config " + d + "/bad.cfg") == 2);
  slap::test::spit(dir / "missing.cfg", "cube=nothere.hdr\nground_truth=gt.txt\n");
  CHECK(run("pipeline --config " + d + "/missing.cfg --out " + d + "/x") == 3);
  CHECK(run("evaluate --config " + d + "/slap.cfg --out " + d + "/cache") == 4);
  CHECK(run("segment --config " + d + "/slap.cfg --out " + d + "/cache") == 0);
  CHECK(run("bogus") == 2);
  CHECK(run("pipeline") == 2);
}
