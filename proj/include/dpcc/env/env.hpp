#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dpcc/core/constraints.hpp"
#include "dpcc/core/normalizer.hpp"
#include "dpcc/core/random.hpp"
#include "dpcc/core/serialization.hpp"
#include "dpcc/core/trajectory.hpp"

namespace dpcc {

inline constexpr int kDatasetSchemaVersion = 1;

struct DiskObstacle {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;
};

/// One named list of novel constraints on the actual-position coordinates.
struct SuiteSpec {
  std::string name;
  std::vector<ConstraintPrimitive> primitives;  // raw units, state space
};

/// Planar reach-the-line world. State s = [p; d]: actual and desired
/// end-effector positions; the action is the desired-position velocity.
struct EnvConfig {
  Eigen::Vector2d workspace_lower{-1.0, -1.0};
  Eigen::Vector2d workspace_upper{1.0, 1.0};
  std::vector<DiskObstacle> obstacles;
  double goal_y = 0.9;
  double start_y = -0.9;
  double start_x_spread = 0.15;  // start x ~ U[-spread, spread]
  double sample_time = 0.1;
  double kp = 5.0;               // low-level tracking gain, 1/s
  double v_max = 0.45;           // actuator speed cap
  int episode_cap = 300;
  double noise_amp = 0.03;       // bounded additive position noise
  bool ideal_tracking = false;   // p follows the commanded velocity exactly

  // Expert demonstrations.
  std::vector<std::string> routes;  // one gap letter (L, M, R) per obstacle row
  std::vector<double> gap_x{-0.7, 0.0, 0.7};
  std::vector<double> row_y{-0.4, 0.0, 0.4};
  double nominal_speed = 0.4;
  double speed_jitter = 0.1;       // relative
  double waypoint_jitter = 0.05;
  double max_action_change = 0.12; // per step
  double collision_margin = 0.02;
  int tail_steps = 7;              // steps recorded after the goal is reached
  int max_retries = 50;

  std::vector<SuiteSpec> suites;

  static EnvConfig defaults();
  /// Throws ConfigError when obstacles leave the workspace, the goal line is
  /// outside it, or a numeric knob is out of range.
  void validate() const;
  int state_dim() const { return 4; }
  int action_dim() const { return 2; }
};

Json env_config_to_json(const EnvConfig& c);
/// Missing keys keep their defaults.
EnvConfig env_config_from_json(const Json& j);

/// Added to the plant's next state (raw units); receives the state, the
/// applied action and the undisturbed next state.
using Disturbance =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& s, const Eigen::VectorXd& a, const Eigen::VectorXd& next)>;

/// True plant: d' = d + a t_s, p' = p + sat(kp (d - p), v_max) t_s, with the
/// action limited to norm v_max, plus optional bounded noise (uniform in a
/// disk of radius noise_amp) and an optional injected disturbance.
class Plant {
 public:
  Plant(EnvConfig config, std::uint64_t seed);

  Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& a);
  void set_disturbance(Disturbance d) { disturbance_ = std::move(d); }
  const EnvConfig& config() const { return config_; }

 private:
  EnvConfig config_;
  Rng rng_;
  Disturbance disturbance_;
};

/// Noise-free plant step.
Eigen::VectorXd env_step(const Eigen::VectorXd& s, const Eigen::VectorXd& a, const EnvConfig& config);

/// 1 iff the actual position has reached the goal line (y >= goal_y).
int goal_indicator(const Eigen::VectorXd& s, double goal_y);

/// Start state p = d = (x0, start_y), x0 drawn from `rng`.
Eigen::VectorXd sample_start_state(const EnvConfig& config, Rng& rng);

bool collides(const Eigen::VectorXd& s, const EnvConfig& config, double margin = 0.0);

using Policy = std::function<Eigen::VectorXd(const Eigen::VectorXd& s)>;

/// Scripted expert: pure pursuit of the desired position along jittered
/// waypoints through the route's gaps, with a per-step limit on action change.
class ExpertTracker {
 public:
  ExpertTracker(const EnvConfig& config, const std::string& route, Rng& rng);
  Eigen::VectorXd act(const Eigen::VectorXd& s);

 private:
  std::vector<Eigen::Vector2d> waypoints_;
  std::size_t next_ = 0;
  double speed_;
  double max_change_;
  Eigen::Vector2d last_action_ = Eigen::Vector2d::Zero();
};

struct Demonstration {
  std::string route;
  Trajectory raw;  // states (T+1) x 4, actions (T+1) x 2, raw units
  std::uint64_t seed = 0;
};

/// N demonstrations balanced over the configured routes; each reaches the
/// goal and stays clear of the training obstacles. Throws ConfigError when
/// N is not a multiple of the route count or a route keeps failing.
std::vector<Demonstration> generate_demos(const EnvConfig& config, int count, std::uint64_t seed);

void write_dataset(const std::filesystem::path& path, const std::vector<Demonstration>& demos);
std::vector<Demonstration> read_dataset(const std::filesystem::path& path);
std::vector<Trajectory> raw_trajectories(const std::vector<Demonstration>& demos);

/// Coordinate groups that share a normalization scale: (p_x, d_x) and
/// (p_y, d_y) would break disks, so all four position entries share one.
std::vector<std::vector<int>> shared_position_groups();

/// safety * max ||s' - f(s, a)|| over the transitions, measured in the
/// normalizer's units. `states` is (T+1) x d_s per rollout, `actions` T x d_a.
double mismatch_bound(const std::vector<Trajectory>& rollouts, const Normalizer& normalizer,
                      double sample_time, double safety = 1.1);

/// Runs `n_rollouts` episodes of the policy built by `make_policy` on the
/// true plant (no novel constraints) and returns the mismatch bound.
double estimate_gamma(const EnvConfig& config, const Normalizer& normalizer,
                      const std::function<Policy(int rollout)>& make_policy, int n_rollouts,
                      std::uint64_t seed, double safety = 1.1, int max_steps = 0);

/// Closed-loop rollout of one policy; stops at the goal or after max_steps.
Trajectory rollout(const EnvConfig& config, const Policy& policy, const Eigen::VectorXd& start,
                   std::uint64_t seed, int max_steps);

struct NamedSuite {
  std::string name;
  StageConstraintSet raw;  // raw units
};

/// Smallest box containing every demonstration action.
Box demo_action_box(const std::vector<Demonstration>& demos);

/// The configured novel constraint suites as time-invariant stage sets of
/// `length` steps with the demo action box. Throws ConfigError when a suite
/// is satisfied by no demonstration at all.
std::vector<NamedSuite> novel_constraint_suite(const EnvConfig& config,
                                               const std::vector<Demonstration>& demos, int length);

/// Only the action box (the training field without novel constraints).
NamedSuite training_field_suite(const std::vector<Demonstration>& demos, int length);

/// Fraction of demonstrations whose every state satisfies the suite's primitives.
double demo_satisfaction(const std::vector<ConstraintPrimitive>& primitives,
                         const std::vector<Demonstration>& demos);

}  // namespace dpcc
