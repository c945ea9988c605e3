// Command-line front end: demo-gen, train, rollout, eval, ablate.
//
// Exit codes: 0 success, 1 runtime or configuration error (one line
// "error: <message>" on stderr), 2 unknown subcommand, flag or value.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "dpcc/core/errors.hpp"
#include "dpcc/diffusion/checkpoint.hpp"
#include "dpcc/harness/harness.hpp"

namespace fs = std::filesystem;
using namespace dpcc;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method;
  bool no_tightening = false;
  std::string suite;
};

ExperimentConfig load(const Options& o) {
  if (o.config.empty()) {
    ExperimentConfig c;
    c.validate();
    return c;
  }
  return load_experiment_config(o.config);
}

std::vector<Demonstration> dataset(const ExperimentConfig& config) {
  const auto path = config.dataset_path();
  if (!fs::exists(path)) {
    std::clog << "generating " << config.demo_count << " demonstrations -> " << path.string() << std::endl;
    const auto demos = generate_demos(config.env, config.demo_count, config.demo_seed);
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    write_dataset(path, demos);
    return demos;
  }
  return read_dataset(path);
}

void restrict_methods(ExperimentConfig& config, const Options& o) {
  if (!o.method.empty()) config.methods = {MethodSpec{method_from_string(o.method), config.controller.guidance_weight}};
  if (o.no_tightening) config.tightening = {false};
}

void log_episode(const EpisodeResult& r) {
  std::clog << r.method << " tight=" << r.tightening << " mismatch=" << r.mismatch << " " << r.suite
            << " train=" << r.train_seed << " test=" << r.test_seed << ": T=" << r.timesteps
            << " goal=" << r.goal << " violations=" << r.violations << std::endl;
}

void print_rows(const std::vector<AggregateRow>& rows) { write_metrics_csv(std::cout, rows); }

int demo_gen(const Options& o) {
  ExperimentConfig config = load(o);
  if (o.seed) config.demo_seed = *o.seed;
  if (!o.out.empty()) config.data_dir = o.out;
  const fs::path path = config.dataset_path();
  const auto demos = generate_demos(config.env, config.demo_count, config.demo_seed);
  fs::create_directories(config.data_dir);
  write_dataset(path, demos);
  std::cout << "wrote " << demos.size() << " demonstrations to " << path.string() << '\n';
  return 0;
}

int train_cmd(const Options& o) {
  ExperimentConfig config = load(o);
  if (o.seed) config.train_seeds = {*o.seed};
  if (!o.out.empty()) config.checkpoint_dir = o.out;
  const auto demos = dataset(config);
  ensure_checkpoints(config, demos, &std::clog);
  for (auto seed : config.train_seeds) {
    std::cout << config.checkpoint_path(seed).string() << " gamma=" << ensure_gamma(config, demos, seed) << '\n';
  }
  return 0;
}

int rollout_cmd(const Options& o) {
  ExperimentConfig config = load(o);
  const auto demos = dataset(config);
  const std::uint64_t train_seed = config.train_seeds.front();
  if (!fs::exists(config.checkpoint_path(train_seed))) {
    throw ConfigError("missing checkpoint for train seed " + std::to_string(train_seed) + ": '" +
                      config.checkpoint_path(train_seed).string() + "' (run train first)");
  }
  const Checkpoint ckpt = load_checkpoint(config.checkpoint_path(train_seed));

  NamedSuite suite;
  if (o.suite == "field") {
    suite = training_field_suite(demos, config.horizon_length);
  } else {
    const auto suites = novel_constraint_suite(config.env, demos, config.horizon_length);
    const std::string name = o.suite.empty() ? suites.front().name : o.suite;
    bool found = false;
    for (const auto& s : suites) {
      if (s.name == name) {
        suite = s;
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown constraint suite '" + name + "'");
  }

  ControllerConfig cc = config.controller;
  if (!o.method.empty()) cc.method = method_from_string(o.method);
  if (o.no_tightening) cc.tightening = false;
  cc.gamma = ensure_gamma(config, demos, train_seed);

  const fs::path dir = o.out.empty() ? config.out_dir / "rollout" : fs::path(o.out);
  fs::create_directories(dir);
  std::ofstream diagnostics(dir / "diagnostics.jsonl");
  EpisodeOptions options;
  options.diagnostics = &diagnostics;
  EpisodeResult r = run_episode(ckpt, cc, config.env, suite, o.seed.value_or(0), options);
  r.train_seed = train_seed;
  r.test_seed = o.seed.value_or(0);
  write_json_file(dir / "episode.json", episode_to_json(r, true), 1);
  std::cout << episode_to_json(r).dump() << '\n';
  return 0;
}

int eval_cmd(const Options& o, bool ablation) {
  ExperimentConfig config = load(o);
  if (o.seed) config.train_seeds = {*o.seed};
  if (!ablation) restrict_methods(config, o);
  const auto demos = dataset(config);
  const fs::path dir = o.out.empty() ? config.out_dir / (ablation ? "ablation" : "evaluation") : fs::path(o.out);
  const EvaluationResult result =
      ablation ? ablate_model_mismatch(config, demos, log_episode) : evaluate(config, demos, log_episode);
  write_evaluation(dir, result, config);
  print_rows(result.rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion predictive control with constraints"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON experiment config (defaults when omitted)");
    sub->add_option("--seed", o.seed, "seed (demo, train or episode seed depending on the command)");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* demo = app.add_subcommand("demo-gen", "generate the demonstration dataset");
  common(demo);
  auto* train = app.add_subcommand("train", "train one checkpoint per train seed and estimate gamma");
  common(train);
  auto* roll = app.add_subcommand("rollout", "run one closed-loop episode with diagnostics");
  common(roll);
  roll->add_option("--method", o.method, "dpcc-r|dpcc-t|dpcc-c|diffuser|guidance|post-processing|model-free");
  roll->add_flag("--no-tightening", o.no_tightening, "plan on the untightened constraints");
  roll->add_option("--suite", o.suite, "constraint suite name, or 'field'");
  auto* eval = app.add_subcommand("eval", "evaluate the method grid and write metrics");
  common(eval);
  eval->add_option("--method", o.method, "evaluate only this method");
  eval->add_flag("--no-tightening", o.no_tightening, "evaluate only without tightening");
  auto* ablate = app.add_subcommand("ablate", "model-mismatch ablation of DPCC-C");
  common(ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*demo) return demo_gen(o);
    if (*train) return train_cmd(o);
    if (*roll) return rollout_cmd(o);
    if (*eval) return eval_cmd(o, false);
    if (*ablate) return eval_cmd(o, true);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
