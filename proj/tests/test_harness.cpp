#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "dpcc/core/errors.hpp"
#include "dpcc/diffusion/checkpoint.hpp"
#include "dpcc/harness/harness.hpp"

using namespace dpcc;

namespace {

EpisodeResult episode(int timesteps, bool goal, int violations) {
  EpisodeResult e;
  e.method = "dpcc-c";
  e.timesteps = timesteps;
  e.goal = goal;
  e.violations = violations;
  e.constraints_and_goal = goal && violations == 0;
  return e;
}

// Small but complete experiment: 16 demos, a tiny network, short episodes.
ExperimentConfig tiny_experiment(const std::filesystem::path& root) {
  ExperimentConfig c;
  c.env.episode_cap = 12;  // demos are generated with the default cap, see tiny_demos
  c.demo_count = 16;
  c.horizon_length = 4;
  c.diffusion_steps = 4;
  c.train.steps = 100;
  c.train.epochs = 2;
  c.train.warmup_steps = 10;
  c.train.hidden = {16};
  c.train.embed_dim = 4;
  c.train.validation_samples = 16;
  c.train.validation_fraction = 0.2;
  c.train_seeds = {0};
  c.test_seeds = {0, 1};
  c.suites = {"S1"};
  c.methods = {{Method::dpcc_c, 1.0}, {Method::diffuser, 1.0}};
  c.controller.batch = 2;
  c.gamma_rollouts = 0;
  c.data_dir = root / "data";
  c.checkpoint_dir = root / "checkpoints";
  c.out_dir = root / "results";
  return c;
}

std::vector<Demonstration> tiny_demos(const ExperimentConfig& c) {
  EnvConfig env = c.env;
  env.episode_cap = EnvConfig::defaults().episode_cap;
  return generate_demos(env, c.demo_count, c.demo_seed);
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("aggregation uses population statistics and both timestep conventions") {
  const std::vector<EpisodeResult> eps{episode(60, true, 0), episode(80, true, 2), episode(300, false, 1)};
  const AggregateRow r = aggregate(eps);
  CHECK(r.episodes == 3);
  CHECK(r.timesteps_mean == doctest::Approx(440.0 / 3.0));
  const double m = 440.0 / 3.0;
  CHECK(r.timesteps_std ==
        doctest::Approx(std::sqrt(((60 - m) * (60 - m) + (80 - m) * (80 - m) + (300 - m) * (300 - m)) / 3.0)));
  CHECK(r.success_timesteps_mean == doctest::Approx(70.0));
  CHECK(r.success_timesteps_std == doctest::Approx(10.0));
  CHECK(r.goal_rate == doctest::Approx(2.0 / 3.0));
  CHECK(r.cg_rate == doctest::Approx(1.0 / 3.0));
  CHECK(r.cg_rate <= r.goal_rate);
  CHECK(r.viol_mean == doctest::Approx(1.0));
  CHECK(r.viol_std == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(aggregate({}).episodes == 0);
}

TEST_CASE("metrics CSV layout is fixed and versioned") {
  AggregateRow r;
  r.method = "dpcc-t";
  r.tightening = false;
  r.mismatch = 2.0;
  r.timesteps_mean = 70.5;
  r.success_timesteps_mean = 65.0;
  r.goal_rate = 1.0;
  std::ostringstream all, success;
  write_metrics_csv(all, {r});
  write_metrics_csv(success, {r}, true);
  std::istringstream in(all.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# schema_version=1");
  std::getline(in, line);
  CHECK(line == "method,tightening,mismatch,timesteps_mean,timesteps_std,goal_rate,cg_rate,viol_mean,viol_std");
  std::getline(in, line);
  CHECK(line == "dpcc-t,0,2,70.5,0,1,0,0,0");
  CHECK(success.str().find("dpcc-t,0,2,65,0,1,0,0,0") != std::string::npos);
}

TEST_CASE("violation count replays the state trace") {
  const Normalizer id(Eigen::VectorXd::Constant(4, -1.0), Eigen::VectorXd::Constant(4, 1.0),
                      Eigen::VectorXd::Constant(2, -1.0), Eigen::VectorXd::Constant(2, 1.0));
  const auto cs = StageConstraintSet::time_invariant(3, {make_avoid_disk({0.0, 0.0}, 0.2)},
                                                     make_box(Eigen::Vector2d::Constant(-1), Eigen::Vector2d::Constant(1)));
  auto at = [](double x, double y) {
    Eigen::VectorXd s(4);
    s << x, y, x, y;
    return s;
  };
  // The start state is never counted; the boundary itself is not a violation.
  const std::vector<Eigen::VectorXd> states{at(0, 0), at(0.5, 0), at(0.1, 0), at(0.2, 0), at(0, -0.19)};
  CHECK(count_violations(states, cs, id) == 2);
  CHECK(count_violations({at(0, 0)}, cs, id) == 0);
}

TEST_CASE("experiment config JSON round trip and errors") {
  ExperimentConfig c;
  c.train_seeds = {4, 5};
  c.methods = {{Method::guidance, 2.5}};
  c.tightening = {true, false};
  c.gamma_rollouts = 7;
  const ExperimentConfig back = experiment_config_from_json(experiment_config_to_json(c));
  CHECK(back.train_seeds == c.train_seeds);
  REQUIRE(back.methods.size() == 1);
  CHECK(back.methods[0].label() == "guidance[2.5]");
  CHECK(back.tightening == c.tightening);
  CHECK(back.gamma_rollouts == 7);
  CHECK(experiment_config_to_json(back) == experiment_config_to_json(c));

  c.test_seeds.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  try {
    load_experiment_config("/nonexistent/dpcc.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dpcc.json") != std::string::npos);
  }
}

TEST_CASE("evaluation without checkpoints names the missing seed") {
  const auto root = fresh_dir("dpcc_harness_missing");
  ExperimentConfig c = tiny_experiment(root);
  c.train_seeds = {42};
  const auto demos = tiny_demos(c);
  try {
    evaluate(c, demos);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
  std::filesystem::remove_all(root);
}

TEST_CASE("tiny end-to-end evaluation is consistent and reproducible") {
  const auto root = fresh_dir("dpcc_harness_tiny");
  ExperimentConfig c = tiny_experiment(root);
  const auto demos = tiny_demos(c);
  ensure_checkpoints(c, demos);
  REQUIRE(std::filesystem::exists(c.checkpoint_path(0)));

  const EvaluationResult a = evaluate(c, demos);
  REQUIRE(a.rows.size() == 2);
  REQUIRE(a.episodes.size() == 4);
  for (const auto& e : a.episodes) {
    CHECK(e.states.size() == e.actions.size() + 1);
    CHECK(e.violations <= static_cast<int>(e.actions.size()));
    CHECK((!e.constraints_and_goal || e.goal));
    CHECK(e.timesteps == (e.goal ? static_cast<int>(e.actions.size()) : c.env.episode_cap));
  }
  for (const auto& r : a.rows) CHECK(r.cg_rate <= r.goal_rate);

  // Same seeds, same episodes.
  const EvaluationResult b = evaluate(c, demos);
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    CHECK(a.episodes[i].states == b.episodes[i].states);
    CHECK(a.episodes[i].violations == b.episodes[i].violations);
  }

  // Aggregates equal a recomputation from the per-episode log.
  write_evaluation(c.out_dir, a, c);
  for (const char* f : {"metrics.csv", "metrics_successful.csv", "episodes.jsonl", "plot_data.json"}) {
    CHECK(std::filesystem::exists(c.out_dir / f));
  }
  std::ifstream in(c.out_dir / "episodes.jsonl");
  std::map<std::string, std::vector<EpisodeResult>> by_method;
  std::string line;
  while (std::getline(in, line)) {
    const Json j = Json::parse(line);
    EpisodeResult e = episode(j.at("timesteps"), j.at("goal"), j.at("violations"));
    e.constraints_and_goal = j.at("constraints_and_goal");
    by_method[j.at("method")].push_back(e);
  }
  for (const auto& r : a.rows) {
    const AggregateRow again = aggregate(by_method.at(r.method));
    CHECK(std::abs(again.timesteps_mean - r.timesteps_mean) <= 1e-12);
    CHECK(std::abs(again.timesteps_std - r.timesteps_std) <= 1e-12);
    CHECK(std::abs(again.goal_rate - r.goal_rate) <= 1e-12);
    CHECK(std::abs(again.cg_rate - r.cg_rate) <= 1e-12);
    CHECK(std::abs(again.viol_mean - r.viol_mean) <= 1e-12);
  }

  // Violation counts replay from the recorded traces.
  const Checkpoint ck = load_checkpoint(c.checkpoint_path(0));
  const auto suites = novel_constraint_suite(c.env, demos, c.horizon_length);
  const auto truth = normalize_constraints(suites[0].raw, ck.normalizer);
  for (const auto& e : a.episodes) CHECK(count_violations(e.states, truth, ck.normalizer) == e.violations);

  // Diagnostics stream: one JSON line per control step.
  std::ostringstream diag;
  EpisodeOptions opts;
  opts.diagnostics = &diag;
  const EpisodeResult one = run_episode(ck, c.controller, c.env, suites[0], 3, opts);
  std::istringstream lines(diag.str());
  int n = 0;
  while (std::getline(lines, line)) {
    const Json j = Json::parse(line);
    CHECK(j.at("t") == n);
    ++n;
  }
  CHECK(n == static_cast<int>(one.actions.size()));

  // An empty method grid produces an empty table.
  c.methods.clear();
  CHECK(evaluate(c, demos).rows.empty());
  std::filesystem::remove_all(root);
}

}  // TEST_SUITE
