#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "dpcc/controller/controller.hpp"
#include "dpcc/diffusion/training.hpp"
#include "dpcc/env/env.hpp"

namespace dpcc {

inline constexpr int kMetricsSchemaVersion = 1;

/// Violations are counted when any true-set violation exceeds this (normalized units).
inline constexpr double kViolationThreshold = 1e-6;

struct EpisodeResult {
  std::string method;  // label, e.g. "dpcc-c" or "guidance[1]"
  bool tightening = true;
  double mismatch = 1.0;
  std::string suite;
  std::uint64_t train_seed = 0;
  std::uint64_t test_seed = 0;
  int timesteps = 0;        // steps until the goal, or the cap on failure
  bool goal = false;
  bool constraints_and_goal = false;
  int violations = 0;       // steps whose true state violates a constraint
  int flagged_steps = 0;    // steps where no candidate had converged projections
  double mean_step_seconds = 0.0;
  std::vector<Eigen::VectorXd> states;   // raw state trace, start included
  std::vector<Eigen::VectorXd> actions;  // raw applied actions, one per step
};

Json episode_to_json(const EpisodeResult& r, bool with_trace = false);

struct EpisodeOptions {
  Disturbance disturbance;                // injected into the plant
  std::ostream* diagnostics = nullptr;    // per-step JSON Lines
  int max_steps = 0;                      // 0: the environment's cap
};

/// Control loop: control_step then plant step until the goal line or the
/// cap. Violations are evaluated on the untightened constraints.
EpisodeResult run_episode(const Checkpoint& checkpoint, const ControllerConfig& controller,
                          const EnvConfig& env, const NamedSuite& suite, std::uint64_t seed,
                          const EpisodeOptions& options = {});

/// Number of states in `states` (start excluded) violating `constraints`
/// (normalized, stage 1 list) by more than the threshold.
int count_violations(const std::vector<Eigen::VectorXd>& states, const StageConstraintSet& normalized,
                     const Normalizer& normalizer);

struct MethodSpec {
  Method method = Method::dpcc_c;
  double guidance_weight = 1.0;
  std::string label() const;
};

/// Every method once, Guidance with weight 1.
std::vector<MethodSpec> all_methods();

struct AggregateRow {
  std::string method;
  bool tightening = true;
  double mismatch = 1.0;
  int episodes = 0;
  double timesteps_mean = 0.0;  // failed episodes count as the cap
  double timesteps_std = 0.0;
  double success_timesteps_mean = 0.0;  // successful episodes only
  double success_timesteps_std = 0.0;
  double goal_rate = 0.0;
  double cg_rate = 0.0;
  double viol_mean = 0.0;
  double viol_std = 0.0;
};

AggregateRow aggregate(const std::vector<EpisodeResult>& episodes);

struct ExperimentConfig {
  EnvConfig env = EnvConfig::defaults();
  TrainConfig train;
  ControllerConfig controller;
  int demo_count = 96;
  std::uint64_t demo_seed = 0;
  int horizon_length = 8;  // H + 1
  int diffusion_steps = 20;
  std::vector<std::uint64_t> train_seeds{0, 1, 2};
  std::vector<std::uint64_t> test_seeds{0, 1, 2, 3, 4};
  std::vector<std::string> suites;  // empty: every configured suite
  std::vector<MethodSpec> methods = all_methods();
  std::vector<bool> tightening{true};
  std::vector<double> mismatch_factors{1.0};
  std::vector<double> ablation_factors{0.25, 0.5, 1.0, 2.0, 4.0};
  int gamma_rollouts = 100;  // 0: use controller.gamma as configured
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path out_dir = "results";

  /// Throws ConfigError for empty seed lists or bad values.
  void validate() const;
  std::filesystem::path dataset_path() const { return data_dir / "demos.jsonl"; }
  std::filesystem::path checkpoint_path(std::uint64_t train_seed) const;
  std::filesystem::path gamma_path(std::uint64_t train_seed) const;
};

Json experiment_config_to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const Json& j);
/// Reads a JSON config file; a missing file is a ConfigError naming it.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Trains one checkpoint per train seed on the dataset (seed replaces the
/// training seed) unless the file already exists, then makes sure its
/// mismatch bound is cached as well.
void ensure_checkpoints(const ExperimentConfig& config, const std::vector<Demonstration>& demos,
                        std::ostream* log = nullptr);

/// Unconstrained Diffuser policy (training field only) on top of `checkpoint`.
Policy diffuser_policy(const Checkpoint& checkpoint, const EnvConfig& env, const NamedSuite& field,
                       std::uint64_t seed);

/// Mismatch bound for one checkpoint: estimate_gamma over `gamma_rollouts`
/// unconstrained Diffuser rollouts, cached in gamma_path(seed). Returns
/// controller.gamma when gamma_rollouts is 0.
double ensure_gamma(const ExperimentConfig& config, const std::vector<Demonstration>& demos,
                    std::uint64_t train_seed, std::ostream* log = nullptr);

struct EvaluationResult {
  std::vector<AggregateRow> rows;
  std::vector<EpisodeResult> episodes;
};

using EpisodeCallback = std::function<void(const EpisodeResult&)>;

/// Every (method, tightening, mismatch) combination over train seeds x test
/// seeds x suites. Episode seeds depend only on (train seed, test seed,
/// suite), so methods are compared on identical starts and noise. Throws
/// ConfigError naming the seed when a checkpoint is missing.
EvaluationResult evaluate(const ExperimentConfig& config, const std::vector<Demonstration>& demos,
                          const EpisodeCallback& on_episode = {});

/// DPCC-C with tightening over the ablation factors: the projection's model
/// uses t_s * factor while the plant is unchanged.
EvaluationResult ablate_model_mismatch(const ExperimentConfig& config,
                                       const std::vector<Demonstration>& demos,
                                       const EpisodeCallback& on_episode = {});

/// Fixed column order, preceded by a "# schema_version=1" line.
void write_metrics_csv(std::ostream& out, const std::vector<AggregateRow>& rows, bool success_only = false);

/// Rows, per-episode summaries, and position traces of the first test seed
/// for every (row, suite), for external plotting.
Json plot_data(const EvaluationResult& result, const ExperimentConfig& config);

/// Writes metrics.csv, metrics_successful.csv, episodes.jsonl and plot_data.json into `dir`.
void write_evaluation(const std::filesystem::path& dir, const EvaluationResult& result,
                      const ExperimentConfig& config);

std::uint64_t episode_seed(std::uint64_t train_seed, std::uint64_t test_seed, std::size_t suite_index);

}  // namespace dpcc
