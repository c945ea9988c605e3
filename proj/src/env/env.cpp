#include "dpcc/env/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "dpcc/core/dynamics.hpp"
#include "dpcc/core/errors.hpp"

namespace dpcc {

namespace {

Eigen::Vector2d saturate(const Eigen::Vector2d& v, double cap) {
  const double n = v.norm();
  return n > cap ? Eigen::Vector2d(v * (cap / n)) : v;
}

// n . p <= offset on the actual-position coordinates.
Halfspace position_halfspace(double nx, double ny, double offset) {
  Eigen::VectorXd n = Eigen::VectorXd::Zero(4);
  n[0] = nx;
  n[1] = ny;
  return make_halfspace(n, offset);
}

}  // namespace

EnvConfig EnvConfig::defaults() {
  EnvConfig c;
  for (double x : {-0.35, 0.35}) {
    for (double y : {-0.4, 0.0, 0.4}) c.obstacles.push_back({Eigen::Vector2d(x, y), 0.12});
  }
  c.routes = {"LLL", "RRR", "LMM", "RMM", "MML", "MMR", "LMR", "RML"};
  // Each suite leaves exactly one demonstrated route open (MML, RML, LMR),
  // so the robot has to weave around several novel obstacles.
  const auto disk = [](double x, double y, double r) { return make_avoid_disk(Eigen::Vector2d(x, y), r); };
  c.suites.push_back({"S1", {disk(-0.7, -0.4, 0.2), disk(-0.7, 0.0, 0.2), disk(0.0, 0.4, 0.2),
                             position_halfspace(1.0, 0.0, 0.5)}});
  c.suites.push_back({"S2", {disk(-0.7, 0.0, 0.2), disk(0.7, 0.0, 0.2), disk(0.0, 0.4, 0.2), disk(-0.7, -0.4, 0.2),
                             disk(0.0, -0.4, 0.2)}});
  c.suites.push_back({"S3", {disk(-0.7, 0.0, 0.2), disk(0.7, 0.0, 0.2), disk(0.0, 0.4, 0.2), disk(0.7, -0.4, 0.2),
                             disk(0.0, -0.4, 0.2)}});
  return c;
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("env config: " + msg); };
  if (!(workspace_upper.array() > workspace_lower.array()).all()) fail("empty workspace");
  for (const auto& o : obstacles) {
    if (!(o.radius > 0.0)) fail("obstacle radius must be > 0");
    if ((o.center.array() - o.radius < workspace_lower.array()).any() ||
        (o.center.array() + o.radius > workspace_upper.array()).any()) {
      fail("obstacle outside the workspace");
    }
  }
  if (goal_y <= workspace_lower[1] || goal_y > workspace_upper[1]) fail("goal line outside the workspace");
  if (start_y >= goal_y) fail("start must lie below the goal line");
  if (!(sample_time > 0.0) || !(kp > 0.0) || !(v_max > 0.0)) fail("t_s, kp and v_max must be > 0");
  if (episode_cap < 1) fail("episode cap must be >= 1");
  if (noise_amp < 0.0) fail("noise amplitude must be >= 0");
  if (!(nominal_speed > 0.0) || nominal_speed > v_max) fail("nominal speed must be in (0, v_max]");
  for (const auto& r : routes) {
    if (r.size() != row_y.size()) fail("route '" + r + "' needs one gap per obstacle row");
    for (char g : r) {
      if (g != 'L' && g != 'M' && g != 'R') fail("route '" + r + "' uses an unknown gap");
    }
  }
  if (gap_x.size() != 3) fail("three gap positions (L, M, R) required");
  for (const auto& s : suites) {
    for (const auto& p : s.primitives) dpcc::validate(p);
  }
}

Json env_config_to_json(const EnvConfig& c) {
  Json obstacles = Json::array();
  for (const auto& o : c.obstacles) obstacles.push_back({{"center", {o.center[0], o.center[1]}}, {"radius", o.radius}});
  Json suites = Json::array();
  for (const auto& s : c.suites) {
    Json prims = Json::array();
    for (const auto& p : s.primitives) prims.push_back(primitive_to_json(p));
    suites.push_back({{"name", s.name}, {"primitives", prims}});
  }
  return Json{{"workspace_lower", {c.workspace_lower[0], c.workspace_lower[1]}},
              {"workspace_upper", {c.workspace_upper[0], c.workspace_upper[1]}},
              {"obstacles", obstacles},
              {"goal_y", c.goal_y},
              {"start_y", c.start_y},
              {"start_x_spread", c.start_x_spread},
              {"sample_time", c.sample_time},
              {"kp", c.kp},
              {"v_max", c.v_max},
              {"episode_cap", c.episode_cap},
              {"noise_amp", c.noise_amp},
              {"ideal_tracking", c.ideal_tracking},
              {"routes", c.routes},
              {"gap_x", c.gap_x},
              {"row_y", c.row_y},
              {"nominal_speed", c.nominal_speed},
              {"speed_jitter", c.speed_jitter},
              {"waypoint_jitter", c.waypoint_jitter},
              {"max_action_change", c.max_action_change},
              {"collision_margin", c.collision_margin},
              {"tail_steps", c.tail_steps},
              {"max_retries", c.max_retries},
              {"suites", suites}};
}

EnvConfig env_config_from_json(const Json& j) {
  EnvConfig c = EnvConfig::defaults();
  try {
    auto vec2 = [](const Json& v) { return Eigen::Vector2d(v.at(0).get<double>(), v.at(1).get<double>()); };
    if (j.contains("workspace_lower")) c.workspace_lower = vec2(j["workspace_lower"]);
    if (j.contains("workspace_upper")) c.workspace_upper = vec2(j["workspace_upper"]);
    if (j.contains("obstacles")) {
      c.obstacles.clear();
      for (const auto& o : j["obstacles"]) c.obstacles.push_back({vec2(o.at("center")), o.at("radius").get<double>()});
    }
    c.goal_y = j.value("goal_y", c.goal_y);
    c.start_y = j.value("start_y", c.start_y);
    c.start_x_spread = j.value("start_x_spread", c.start_x_spread);
    c.sample_time = j.value("sample_time", c.sample_time);
    c.kp = j.value("kp", c.kp);
    c.v_max = j.value("v_max", c.v_max);
    c.episode_cap = j.value("episode_cap", c.episode_cap);
    c.noise_amp = j.value("noise_amp", c.noise_amp);
    c.ideal_tracking = j.value("ideal_tracking", c.ideal_tracking);
    c.routes = j.value("routes", c.routes);
    c.gap_x = j.value("gap_x", c.gap_x);
    c.row_y = j.value("row_y", c.row_y);
    c.nominal_speed = j.value("nominal_speed", c.nominal_speed);
    c.speed_jitter = j.value("speed_jitter", c.speed_jitter);
    c.waypoint_jitter = j.value("waypoint_jitter", c.waypoint_jitter);
    c.max_action_change = j.value("max_action_change", c.max_action_change);
    c.collision_margin = j.value("collision_margin", c.collision_margin);
    c.tail_steps = j.value("tail_steps", c.tail_steps);
    c.max_retries = j.value("max_retries", c.max_retries);
    if (j.contains("suites")) {
      c.suites.clear();
      for (const auto& s : j["suites"]) {
        SuiteSpec spec{s.at("name").get<std::string>(), {}};
        for (const auto& p : s.at("primitives")) spec.primitives.push_back(primitive_from_json(p));
        c.suites.push_back(std::move(spec));
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("env config: malformed field: ") + e.what());
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------------ plant

Eigen::VectorXd env_step(const Eigen::VectorXd& s, const Eigen::VectorXd& a, const EnvConfig& config) {
  if (s.size() != 4 || a.size() != 2) throw std::invalid_argument("env_step: expects s in R^4 and a in R^2");
  const double ts = config.sample_time;
  const Eigen::Vector2d u = saturate(a.head<2>(), config.v_max);
  const Eigen::Vector2d p = s.head<2>();
  const Eigen::Vector2d d = s.tail<2>();
  Eigen::VectorXd next(4);
  if (config.ideal_tracking) {
    next.head<2>() = p + u * ts;
  } else {
    next.head<2>() = p + saturate(config.kp * (d - p), config.v_max) * ts;
  }
  next.tail<2>() = d + u * ts;
  return next;
}

Plant::Plant(EnvConfig config, std::uint64_t seed) : config_(std::move(config)), rng_(seed) {}

Eigen::VectorXd Plant::step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) {
  Eigen::VectorXd next = env_step(s, a, config_);
  if (config_.noise_amp > 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double radius = config_.noise_amp * std::sqrt(unit(rng_));
    const double angle = 2.0 * std::numbers::pi * unit(rng_);
    next[0] += radius * std::cos(angle);
    next[1] += radius * std::sin(angle);
  }
  if (disturbance_) next += disturbance_(s, a, next);
  return next;
}

int goal_indicator(const Eigen::VectorXd& s, double goal_y) { return s[1] >= goal_y ? 1 : 0; }

Eigen::VectorXd sample_start_state(const EnvConfig& config, Rng& rng) {
  std::uniform_real_distribution<double> x0(-config.start_x_spread, config.start_x_spread);
  const double x = x0(rng);
  Eigen::VectorXd s(4);
  s << x, config.start_y, x, config.start_y;
  return s;
}

bool collides(const Eigen::VectorXd& s, const EnvConfig& config, double margin) {
  const Eigen::Vector2d p = s.head<2>();
  for (const auto& o : config.obstacles) {
    if ((p - o.center).norm() < o.radius + margin) return true;
  }
  return false;
}

// ------------------------------------------------------------------ expert

ExpertTracker::ExpertTracker(const EnvConfig& config, const std::string& route, Rng& rng)
    : max_change_(config.max_action_change * config.sample_time / 0.1) {
  std::uniform_real_distribution<double> jitter(-config.waypoint_jitter, config.waypoint_jitter);
  std::uniform_real_distribution<double> speed(1.0 - config.speed_jitter, 1.0 + config.speed_jitter);
  speed_ = std::min(config.v_max, config.nominal_speed * speed(rng));
  for (std::size_t i = 0; i < route.size(); ++i) {
    const int gap = route[i] == 'L' ? 0 : route[i] == 'M' ? 1 : 2;
    waypoints_.emplace_back(config.gap_x[static_cast<std::size_t>(gap)] + jitter(rng), config.row_y[i] + jitter(rng));
  }
  // Aim past the goal line so the demonstration crosses it at speed.
  const double final_x = 0.6 * waypoints_.back()[0] + jitter(rng);
  waypoints_.emplace_back(final_x, config.goal_y + 0.5);
}

Eigen::VectorXd ExpertTracker::act(const Eigen::VectorXd& s) {
  const Eigen::Vector2d d = s.tail<2>();
  while (next_ + 1 < waypoints_.size() && (waypoints_[next_] - d).norm() < 0.1) ++next_;
  // Pass a row once the desired position is level with it.
  if (next_ + 1 < waypoints_.size() && d[1] > waypoints_[next_][1]) ++next_;
  const Eigen::Vector2d target = waypoints_[next_];
  Eigen::Vector2d dir = target - d;
  const double n = dir.norm();
  Eigen::Vector2d a = n > 1e-9 ? Eigen::Vector2d(dir / n * speed_) : Eigen::Vector2d::Zero();
  const Eigen::Vector2d change = a - last_action_;
  if (change.norm() > max_change_) a = last_action_ + change * (max_change_ / change.norm());
  last_action_ = a;
  return a;
}

// ------------------------------------------------------------------ demos

std::vector<Demonstration> generate_demos(const EnvConfig& config, int count, std::uint64_t seed) {
  config.validate();
  const int routes = static_cast<int>(config.routes.size());
  if (routes == 0) throw ConfigError("demo-gen: no routes configured");
  if (count < 1 || count % routes != 0) {
    throw ConfigError("demo-gen: demo count must be a positive multiple of " + std::to_string(routes));
  }
  std::vector<Demonstration> demos;
  demos.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::string& route = config.routes[static_cast<std::size_t>(i % routes)];
    bool done = false;
    for (int attempt = 0; attempt <= config.max_retries && !done; ++attempt) {
      const std::uint64_t demo_seed = mix_seed({seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(attempt)});
      Rng rng(demo_seed);
      Eigen::VectorXd s = sample_start_state(config, rng);
      ExpertTracker expert(config, route, rng);
      EnvConfig plant_config = config;
      plant_config.noise_amp = 0.0;
      Plant plant(plant_config, demo_seed);

      std::vector<Eigen::VectorXd> states{s};
      std::vector<Eigen::VectorXd> actions;
      int reached_at = -1;
      bool ok = true;
      for (int t = 0; t < config.episode_cap + config.tail_steps; ++t) {
        const Eigen::VectorXd a = expert.act(s);
        actions.push_back(a);
        s = plant.step(s, a);
        states.push_back(s);
        if (collides(s, config, config.collision_margin)) {
          ok = false;
          break;
        }
        if (reached_at < 0 && goal_indicator(s, config.goal_y)) reached_at = t + 1;
        if (reached_at >= 0 && t + 1 >= reached_at + config.tail_steps) break;
      }
      if (!ok || reached_at < 0 || reached_at > config.episode_cap) continue;
      // Final action repeats the last command so rows align with states.
      actions.push_back(expert.act(s));
      Trajectory traj;
      traj.states.resize(static_cast<Eigen::Index>(states.size()), 4);
      traj.actions.resize(static_cast<Eigen::Index>(actions.size()), 2);
      for (std::size_t t = 0; t < states.size(); ++t) {
        traj.states.row(static_cast<Eigen::Index>(t)) = states[t].transpose();
        traj.actions.row(static_cast<Eigen::Index>(t)) = actions[t].transpose();
      }
      demos.push_back({route, std::move(traj), demo_seed});
      done = true;
    }
    if (!done) throw ConfigError("demo-gen: route " + route + " failed after retries");
  }
  return demos;
}

void write_dataset(const std::filesystem::path& path, const std::vector<Demonstration>& demos) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset '" + path.string() + "'");
  for (const auto& d : demos) {
    const Json line{{"schema_version", kDatasetSchemaVersion},
                    {"route_label", d.route},
                    {"seed", d.seed},
                    {"states", matrix_to_json(d.raw.states)},
                    {"actions", matrix_to_json(d.raw.actions)}};
    out << line.dump() << '\n';
  }
}

std::vector<Demonstration> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing dataset '" + path.string() + "'");
  std::vector<Demonstration> demos;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      if (j.at("schema_version").get<int>() != kDatasetSchemaVersion) {
        throw ConfigError("dataset: unsupported schema_version on line " + std::to_string(lineno));
      }
      Demonstration d;
      d.route = j.at("route_label").get<std::string>();
      d.seed = j.at("seed").get<std::uint64_t>();
      d.raw.states = matrix_from_json(j.at("states"), 4);
      d.raw.actions = matrix_from_json(j.at("actions"), 2);
      d.raw.validate();
      demos.push_back(std::move(d));
    } catch (const Json::exception& e) {
      throw ConfigError("dataset: malformed line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return demos;
}

std::vector<Trajectory> raw_trajectories(const std::vector<Demonstration>& demos) {
  std::vector<Trajectory> out;
  out.reserve(demos.size());
  for (const auto& d : demos) out.push_back(d.raw);
  return out;
}

std::vector<std::vector<int>> shared_position_groups() { return {{0, 1, 2, 3}}; }

// ------------------------------------------------------------------ gamma

double mismatch_bound(const std::vector<Trajectory>& rollouts, const Normalizer& normalizer,
                      double sample_time, double safety) {
  NominalDynamics nominal;
  nominal.sample_time = sample_time;
  double worst = 0.0;
  for (const auto& r : rollouts) {
    for (Eigen::Index t = 0; t + 1 < r.states.rows(); ++t) {
      const Eigen::VectorXd s = r.states.row(t).transpose();
      const Eigen::VectorXd a = r.actions.row(t).transpose();
      const Eigen::VectorXd next = r.states.row(t + 1).transpose();
      const Eigen::VectorXd w = normalizer.normalize_state(next) - normalizer.normalize_state(nominal.step(s, a));
      worst = std::max(worst, w.norm());
    }
  }
  return safety * worst;
}

Trajectory rollout(const EnvConfig& config, const Policy& policy, const Eigen::VectorXd& start,
                   std::uint64_t seed, int max_steps) {
  Plant plant(config, seed);
  std::vector<Eigen::VectorXd> states{start};
  std::vector<Eigen::VectorXd> actions;
  Eigen::VectorXd s = start;
  for (int t = 0; t < max_steps && !goal_indicator(s, config.goal_y); ++t) {
    const Eigen::VectorXd a = policy(s);
    actions.push_back(a);
    s = plant.step(s, a);
    states.push_back(s);
  }
  actions.push_back(Eigen::VectorXd::Zero(2));
  Trajectory traj;
  traj.states.resize(static_cast<Eigen::Index>(states.size()), 4);
  traj.actions.resize(static_cast<Eigen::Index>(actions.size()), 2);
  for (std::size_t t = 0; t < states.size(); ++t) {
    traj.states.row(static_cast<Eigen::Index>(t)) = states[t].transpose();
    traj.actions.row(static_cast<Eigen::Index>(t)) = actions[t].transpose();
  }
  return traj;
}

double estimate_gamma(const EnvConfig& config, const Normalizer& normalizer,
                      const std::function<Policy(int rollout)>& make_policy, int n_rollouts,
                      std::uint64_t seed, double safety, int max_steps) {
  if (n_rollouts < 1) throw std::invalid_argument("estimate_gamma: n_rollouts must be >= 1");
  if (max_steps <= 0) max_steps = config.episode_cap;
  std::vector<Trajectory> rollouts;
  for (int i = 0; i < n_rollouts; ++i) {
    Rng rng(mix_seed({seed, static_cast<std::uint64_t>(i)}));
    const Eigen::VectorXd start = sample_start_state(config, rng);
    rollouts.push_back(rollout(config, make_policy(i), start, rng(), max_steps));
  }
  return mismatch_bound(rollouts, normalizer, config.sample_time, safety);
}

// ------------------------------------------------------------------ suites

Box demo_action_box(const std::vector<Demonstration>& demos) {
  if (demos.empty()) throw std::invalid_argument("action box: empty dataset");
  Eigen::Index rows = 0;
  for (const auto& d : demos) rows += d.raw.actions.rows();
  Eigen::MatrixXd all(rows, demos.front().raw.actions.cols());
  Eigen::Index r = 0;
  for (const auto& d : demos) {
    all.middleRows(r, d.raw.actions.rows()) = d.raw.actions;
    r += d.raw.actions.rows();
  }
  return bounding_box(all);
}

double demo_satisfaction(const std::vector<ConstraintPrimitive>& primitives,
                         const std::vector<Demonstration>& demos) {
  if (demos.empty()) return 0.0;
  int ok = 0;
  for (const auto& d : demos) {
    bool sat = true;
    for (Eigen::Index t = 0; t < d.raw.states.rows() && sat; ++t) {
      const Eigen::VectorXd s = d.raw.states.row(t).transpose();
      for (const auto& p : primitives) {
        if (violation(p, s) > 0.0) {
          sat = false;
          break;
        }
      }
    }
    ok += sat ? 1 : 0;
  }
  return static_cast<double>(ok) / static_cast<double>(demos.size());
}

std::vector<NamedSuite> novel_constraint_suite(const EnvConfig& config,
                                               const std::vector<Demonstration>& demos, int length) {
  const Box abox = demo_action_box(demos);
  std::vector<NamedSuite> out;
  for (const auto& s : config.suites) {
    if (demo_satisfaction(s.primitives, demos) <= 0.0) {
      throw ConfigError("suite " + s.name + " leaves no demonstrated corridor");
    }
    out.push_back({s.name, StageConstraintSet::time_invariant(length, s.primitives, abox)});
  }
  return out;
}

NamedSuite training_field_suite(const std::vector<Demonstration>& demos, int length) {
  return {"field", StageConstraintSet::time_invariant(length, {}, demo_action_box(demos))};
}

}  // namespace dpcc
