#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"

#include "dpcc/harness/harness.hpp"

using namespace dpcc;

namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string err;
};

Run run_cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(DPCC_CLI_PATH) + " " + args + " >" + (dir / "stdout.txt").string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

fs::path write_tiny_config(const fs::path& dir) {
  ExperimentConfig c;
  c.demo_count = 16;
  c.horizon_length = 4;
  c.diffusion_steps = 3;
  c.train.steps = 40;
  c.train.epochs = 2;
  c.train.warmup_steps = 5;
  c.train.hidden = {8};
  c.train.embed_dim = 4;
  c.train.validation_samples = 8;
  c.train.validation_fraction = 0.2;
  c.train_seeds = {0};
  c.test_seeds = {0};
  c.suites = {"S2"};
  c.methods = {{Method::dpcc_c, 1.0}};
  c.controller.batch = 2;
  c.gamma_rollouts = 0;
  c.data_dir = dir / "data";
  c.checkpoint_dir = dir / "checkpoints";
  c.out_dir = dir / "results";
  const fs::path path = dir / "config.json";
  std::ofstream(path) << experiment_config_to_json(c).dump(2);
  return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 2") {
  const fs::path dir = fs::temp_directory_path() / "dpcc_cli_usage";
  fs::create_directories(dir);
  CHECK(run_cli("", dir).code == 2);
  CHECK(run_cli("frobnicate", dir).code == 2);
  CHECK(run_cli("eval --bogus-flag", dir).code == 2);
  CHECK(run_cli("train --seed notanumber", dir).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("runtime errors exit with code 1 and a one-line message") {
  const fs::path dir = fs::temp_directory_path() / "dpcc_cli_runtime";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Run missing = run_cli("eval --config " + (dir / "nope.json").string(), dir);
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: ", 0) == 0);
  CHECK(std::count(missing.err.begin(), missing.err.end(), '\n') == 1);
  CHECK(missing.err.find("nope.json") != std::string::npos);

  const fs::path cfg = write_tiny_config(dir);
  const Run no_ckpt = run_cli("eval --config " + cfg.string(), dir);
  CHECK(no_ckpt.code == 1);
  CHECK(no_ckpt.err.find("seed 0") != std::string::npos);
  int error_lines = 0;
  std::istringstream lines(no_ckpt.err);
  for (std::string line; std::getline(lines, line);) error_lines += line.rfind("error: ", 0) == 0;
  CHECK(error_lines == 1);
  fs::remove_all(dir);
}

TEST_CASE("demo-gen, train and rollout produce their artifacts") {
  const fs::path dir = fs::temp_directory_path() / "dpcc_cli_pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = write_tiny_config(dir);

  REQUIRE(run_cli("demo-gen --config " + cfg.string() + " --out " + (dir / "demos").string() + " --seed 0", dir).code == 0);
  const fs::path demos = dir / "demos" / "demos.jsonl";
  REQUIRE(fs::exists(demos));
  CHECK(read_dataset(demos).size() == 16);

  REQUIRE(run_cli("train --config " + cfg.string() + " --seed 0", dir).code == 0);
  CHECK(fs::exists(dir / "checkpoints" / "seed_0.json"));

  const fs::path out = dir / "rollout";
  REQUIRE(run_cli("rollout --config " + cfg.string() + " --method dpcc-c --out " + out.string(), dir).code == 0);
  std::ifstream diag(out / "diagnostics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(diag, line)) {
    const Json j = Json::parse(line);
    CHECK(j.at("method") == "dpcc-c");
    ++lines;
  }
  CHECK(lines >= 1);
  CHECK(fs::exists(out / "episode.json"));

  CHECK(run_cli("rollout --config " + cfg.string() + " --method nonsense", dir).code != 0);
  fs::remove_all(dir);
}

}  // TEST_SUITE
