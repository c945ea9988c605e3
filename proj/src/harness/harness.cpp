#include "dpcc/harness/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "dpcc/core/errors.hpp"
#include "dpcc/diffusion/checkpoint.hpp"

namespace dpcc {

// ------------------------------------------------------------------ episodes

Json episode_to_json(const EpisodeResult& r, bool with_trace) {
  Json j{{"method", r.method},
         {"tightening", r.tightening},
         {"mismatch", r.mismatch},
         {"suite", r.suite},
         {"train_seed", r.train_seed},
         {"test_seed", r.test_seed},
         {"timesteps", r.timesteps},
         {"goal", r.goal},
         {"constraints_and_goal", r.constraints_and_goal},
         {"violations", r.violations},
         {"flagged_steps", r.flagged_steps},
         {"mean_step_seconds", r.mean_step_seconds}};
  if (with_trace) {
    Json trace = Json::array();
    for (const auto& s : r.states) trace.push_back({s[0], s[1]});
    j["trace"] = trace;
  }
  return j;
}

int count_violations(const std::vector<Eigen::VectorXd>& states, const StageConstraintSet& normalized,
                     const Normalizer& normalizer) {
  if (normalized.length() < 2) return 0;
  const auto& prims = normalized.state_constraints[1];
  int count = 0;
  for (std::size_t t = 1; t < states.size(); ++t) {
    const Eigen::VectorXd s = normalizer.normalize_state(states[t]);
    for (double v : violation_report(s, prims)) {
      if (v > kViolationThreshold) {
        ++count;
        break;
      }
    }
  }
  return count;
}

EpisodeResult run_episode(const Checkpoint& checkpoint, const ControllerConfig& controller_config,
                          const EnvConfig& env, const NamedSuite& suite, std::uint64_t seed,
                          const EpisodeOptions& options) {
  ControllerConfig cc = controller_config;
  cc.sample_time = env.sample_time;
  Controller controller(checkpoint, cc, suite.raw, mix_seed({seed, 1}));
  Plant plant(env, mix_seed({seed, 2}));
  if (options.disturbance) plant.set_disturbance(options.disturbance);
  Rng start_rng(mix_seed({seed, 0}));
  Eigen::VectorXd s = sample_start_state(env, start_rng);

  EpisodeResult r;
  r.method = to_string(cc.method);
  r.tightening = cc.tightening;
  r.mismatch = cc.mismatch_factor;
  r.suite = suite.name;
  r.states.push_back(s);
  const int cap = options.max_steps > 0 ? options.max_steps : env.episode_cap;
  double seconds = 0.0;
  int t = 0;
  while (!goal_indicator(s, env.goal_y) && t < cap) {
    const auto start = std::chrono::steady_clock::now();
    ControlOutput out = controller.step(s);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.diagnostics.flagged) ++r.flagged_steps;
    if (options.diagnostics) *options.diagnostics << diagnostics_to_json(out.diagnostics).dump() << '\n';
    s = plant.step(s, out.action);
    r.states.push_back(s);
    r.actions.push_back(out.action);
    ++t;
  }
  r.goal = goal_indicator(s, env.goal_y) == 1;
  r.timesteps = r.goal ? t : cap;
  r.violations = count_violations(r.states, controller.true_constraints(), checkpoint.normalizer);
  r.constraints_and_goal = r.goal && r.violations == 0;
  r.mean_step_seconds = t > 0 ? seconds / t : 0.0;
  return r;
}

// ------------------------------------------------------------------ metrics

std::string MethodSpec::label() const {
  if (method != Method::guidance) return to_string(method);
  std::ostringstream os;
  os << "guidance[" << guidance_weight << "]";
  return os.str();
}

std::vector<MethodSpec> all_methods() {
  std::vector<MethodSpec> out;
  for (Method m : {Method::dpcc_r, Method::dpcc_t, Method::dpcc_c, Method::diffuser, Method::guidance,
                   Method::post_processing, Method::model_free}) {
    out.push_back({m, 1.0});
  }
  return out;
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& std_dev) {
  mean = 0.0;
  std_dev = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) std_dev += (x - mean) * (x - mean);
  std_dev = std::sqrt(std_dev / static_cast<double>(xs.size()));
}

}  // namespace

AggregateRow aggregate(const std::vector<EpisodeResult>& episodes) {
  AggregateRow row;
  if (episodes.empty()) return row;
  row.method = episodes.front().method;
  row.tightening = episodes.front().tightening;
  row.mismatch = episodes.front().mismatch;
  row.episodes = static_cast<int>(episodes.size());
  std::vector<double> steps, success_steps, viol;
  int goals = 0, cg = 0;
  for (const auto& e : episodes) {
    steps.push_back(e.timesteps);
    if (e.goal) success_steps.push_back(e.timesteps);
    viol.push_back(e.violations);
    goals += e.goal ? 1 : 0;
    cg += e.constraints_and_goal ? 1 : 0;
  }
  mean_std(steps, row.timesteps_mean, row.timesteps_std);
  mean_std(success_steps, row.success_timesteps_mean, row.success_timesteps_std);
  mean_std(viol, row.viol_mean, row.viol_std);
  row.goal_rate = static_cast<double>(goals) / static_cast<double>(episodes.size());
  row.cg_rate = static_cast<double>(cg) / static_cast<double>(episodes.size());
  return row;
}

void write_metrics_csv(std::ostream& out, const std::vector<AggregateRow>& rows, bool success_only) {
  out << "# schema_version=" << kMetricsSchemaVersion << '\n';
  out << "method,tightening,mismatch,timesteps_mean,timesteps_std,goal_rate,cg_rate,viol_mean,viol_std\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.method << ',' << (r.tightening ? 1 : 0) << ',' << r.mismatch << ','
        << (success_only ? r.success_timesteps_mean : r.timesteps_mean) << ','
        << (success_only ? r.success_timesteps_std : r.timesteps_std) << ',' << r.goal_rate << ',' << r.cg_rate
        << ',' << r.viol_mean << ',' << r.viol_std << '\n';
  }
}

// ------------------------------------------------------------------ config

void ExperimentConfig::validate() const {
  env.validate();
  train.validate();
  controller.validate();
  if (train_seeds.empty()) throw ConfigError("experiment: train_seeds must not be empty");
  if (test_seeds.empty()) throw ConfigError("experiment: test_seeds must not be empty");
  if (tightening.empty()) throw ConfigError("experiment: tightening list must not be empty");
  if (mismatch_factors.empty()) throw ConfigError("experiment: mismatch_factors must not be empty");
  if (horizon_length < 2) throw ConfigError("experiment: horizon_length must be >= 2");
  if (diffusion_steps < 1) throw ConfigError("experiment: diffusion_steps must be >= 1");
  if (demo_count < 10) throw ConfigError("experiment: at least 10 demonstrations required");
  if (gamma_rollouts < 0) throw ConfigError("experiment: gamma_rollouts must be >= 0");
  for (double f : mismatch_factors) {
    if (!(f > 0.0)) throw ConfigError("experiment: mismatch factors must be > 0");
  }
}

std::filesystem::path ExperimentConfig::checkpoint_path(std::uint64_t train_seed) const {
  return checkpoint_dir / ("seed_" + std::to_string(train_seed) + ".json");
}

std::filesystem::path ExperimentConfig::gamma_path(std::uint64_t train_seed) const {
  return checkpoint_dir / ("seed_" + std::to_string(train_seed) + "_gamma.json");
}

namespace {

Json controller_config_to_json(const ControllerConfig& c) {
  return Json{{"method", to_string(c.method)},
              {"batch", c.batch},
              {"tightening", c.tightening},
              {"gamma", c.gamma},
              {"guidance_weight", c.guidance_weight},
              {"mismatch_factor", c.mismatch_factor},
              {"projection",
               {{"max_iterations", c.projection.max_iterations},
                {"feasibility_tol", c.projection.feasibility_tol},
                {"step_tol", c.projection.step_tol},
                {"damping", c.projection.damping}}}};
}

ControllerConfig controller_config_from_json(const Json& j) {
  ControllerConfig c;
  if (j.contains("method")) c.method = method_from_string(j["method"].get<std::string>());
  c.batch = j.value("batch", c.batch);
  c.tightening = j.value("tightening", c.tightening);
  c.gamma = j.value("gamma", c.gamma);
  c.guidance_weight = j.value("guidance_weight", c.guidance_weight);
  c.mismatch_factor = j.value("mismatch_factor", c.mismatch_factor);
  if (j.contains("projection")) {
    const Json& p = j["projection"];
    c.projection.max_iterations = p.value("max_iterations", c.projection.max_iterations);
    c.projection.feasibility_tol = p.value("feasibility_tol", c.projection.feasibility_tol);
    c.projection.step_tol = p.value("step_tol", c.projection.step_tol);
    c.projection.damping = p.value("damping", c.projection.damping);
  }
  return c;
}

}  // namespace

Json experiment_config_to_json(const ExperimentConfig& c) {
  Json methods = Json::array();
  for (const auto& m : c.methods) {
    methods.push_back({{"method", to_string(m.method)}, {"guidance_weight", m.guidance_weight}});
  }
  Json tightening = Json::array();
  for (bool t : c.tightening) tightening.push_back(t);
  return Json{{"env", env_config_to_json(c.env)},
              {"train", train_config_to_json(c.train)},
              {"controller", controller_config_to_json(c.controller)},
              {"experiment",
               {{"demo_count", c.demo_count},
                {"demo_seed", c.demo_seed},
                {"horizon_length", c.horizon_length},
                {"diffusion_steps", c.diffusion_steps},
                {"cosine_offset", 0.008},
                {"train_seeds", c.train_seeds},
                {"test_seeds", c.test_seeds},
                {"suites", c.suites},
                {"methods", methods},
                {"tightening", tightening},
                {"mismatch_factors", c.mismatch_factors},
                {"ablation_factors", c.ablation_factors},
                {"gamma_rollouts", c.gamma_rollouts},
                {"data_dir", c.data_dir.string()},
                {"checkpoint_dir", c.checkpoint_dir.string()},
                {"out_dir", c.out_dir.string()}}}};
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("env")) c.env = env_config_from_json(j["env"]);
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    if (j.contains("controller")) c.controller = controller_config_from_json(j["controller"]);
    if (j.contains("experiment")) {
      const Json& e = j["experiment"];
      c.demo_count = e.value("demo_count", c.demo_count);
      c.demo_seed = e.value("demo_seed", c.demo_seed);
      c.horizon_length = e.value("horizon_length", c.horizon_length);
      c.diffusion_steps = e.value("diffusion_steps", c.diffusion_steps);
      c.train_seeds = e.value("train_seeds", c.train_seeds);
      c.test_seeds = e.value("test_seeds", c.test_seeds);
      c.suites = e.value("suites", c.suites);
      if (e.contains("methods")) {
        c.methods.clear();
        for (const auto& m : e["methods"]) {
          MethodSpec spec;
          if (m.is_string()) {
            spec.method = method_from_string(m.get<std::string>());
          } else {
            spec.method = method_from_string(m.at("method").get<std::string>());
            spec.guidance_weight = m.value("guidance_weight", spec.guidance_weight);
          }
          c.methods.push_back(spec);
        }
      }
      if (e.contains("tightening")) c.tightening = e["tightening"].get<std::vector<bool>>();
      c.mismatch_factors = e.value("mismatch_factors", c.mismatch_factors);
      c.ablation_factors = e.value("ablation_factors", c.ablation_factors);
      c.gamma_rollouts = e.value("gamma_rollouts", c.gamma_rollouts);
      c.data_dir = e.value("data_dir", c.data_dir.string());
      c.checkpoint_dir = e.value("checkpoint_dir", c.checkpoint_dir.string());
      c.out_dir = e.value("out_dir", c.out_dir.string());
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: malformed field: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("missing config '" + path.string() + "'");
  return experiment_config_from_json(read_json_file(path));
}

namespace {

Checkpoint load_seed_checkpoint(const ExperimentConfig& config, std::uint64_t seed) {
  const auto path = config.checkpoint_path(seed);
  if (!std::filesystem::exists(path)) {
    throw ConfigError("missing checkpoint for train seed " + std::to_string(seed) + ": '" + path.string() + "'");
  }
  return load_checkpoint(path);
}

}  // namespace

void ensure_checkpoints(const ExperimentConfig& config, const std::vector<Demonstration>& demos,
                        std::ostream* log) {
  for (std::uint64_t seed : config.train_seeds) {
    const auto path = config.checkpoint_path(seed);
    if (std::filesystem::exists(path)) continue;
    TrainConfig tc = config.train;
    tc.seed = seed;
    if (log) *log << "training seed " << seed << " -> " << path.string() << std::endl;
    const Checkpoint ckpt = train(raw_trajectories(demos), config.horizon_length, tc,
                                  NoiseSchedule::cosine(config.diffusion_steps), shared_position_groups());
    save_checkpoint(ckpt, path);
  }
  for (std::uint64_t seed : config.train_seeds) ensure_gamma(config, demos, seed, log);
}

Policy diffuser_policy(const Checkpoint& checkpoint, const EnvConfig& env, const NamedSuite& field,
                       std::uint64_t seed) {
  ControllerConfig cc;
  cc.method = Method::diffuser;
  cc.sample_time = env.sample_time;
  auto controller = std::make_shared<Controller>(checkpoint, cc, field.raw, seed);
  return [controller](const Eigen::VectorXd& s) { return controller->step(s).action; };
}

double ensure_gamma(const ExperimentConfig& config, const std::vector<Demonstration>& demos,
                    std::uint64_t train_seed, std::ostream* log) {
  if (config.gamma_rollouts == 0) return config.controller.gamma;
  const auto path = config.gamma_path(train_seed);
  if (std::filesystem::exists(path)) {
    const Json j = read_json_file(path);
    if (j.value("rollouts", 0) == config.gamma_rollouts) return j.at("gamma").get<double>();
  }
  const Checkpoint ckpt = load_seed_checkpoint(config, train_seed);
  const NamedSuite field = training_field_suite(demos, config.horizon_length);
  const std::uint64_t base = mix_seed({train_seed, 0x67616d6d61ULL});
  const double gamma = estimate_gamma(
      config.env, ckpt.normalizer,
      [&](int i) { return diffuser_policy(ckpt, config.env, field, mix_seed({base, static_cast<std::uint64_t>(i)})); },
      config.gamma_rollouts, base);
  if (log) *log << "seed " << train_seed << ": gamma = " << gamma << " from " << config.gamma_rollouts << " rollouts" << std::endl;
  std::filesystem::create_directories(path.parent_path());
  write_json_file(path, Json{{"gamma", gamma}, {"rollouts", config.gamma_rollouts}, {"train_seed", train_seed}});
  return gamma;
}

// ------------------------------------------------------------------ studies

std::uint64_t episode_seed(std::uint64_t train_seed, std::uint64_t test_seed, std::size_t suite_index) {
  return mix_seed({train_seed, test_seed, static_cast<std::uint64_t>(suite_index)});
}

namespace {

struct GridPoint {
  MethodSpec method;
  bool tightening;
  double mismatch;
};

std::vector<NamedSuite> selected_suites(const ExperimentConfig& config, const std::vector<Demonstration>& demos) {
  auto all = novel_constraint_suite(config.env, demos, config.horizon_length);
  if (config.suites.empty()) return all;
  std::vector<NamedSuite> out;
  for (const auto& name : config.suites) {
    if (name == "field") {
      out.push_back(training_field_suite(demos, config.horizon_length));
      continue;
    }
    bool found = false;
    for (const auto& s : all) {
      if (s.name == name) {
        out.push_back(s);
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown constraint suite '" + name + "'");
  }
  return out;
}

EvaluationResult run_grid(const ExperimentConfig& config, const std::vector<Demonstration>& demos,
                          const std::vector<GridPoint>& grid, const EpisodeCallback& on_episode) {
  EvaluationResult result;
  if (grid.empty()) return result;
  const auto suites = selected_suites(config, demos);
  std::vector<std::vector<EpisodeResult>> per_point(grid.size());
  for (std::uint64_t train_seed : config.train_seeds) {
    const Checkpoint ckpt = load_seed_checkpoint(config, train_seed);
    const double gamma = ensure_gamma(config, demos, train_seed);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      ControllerConfig cc = config.controller;
      cc.gamma = gamma;
      cc.method = grid[g].method.method;
      cc.guidance_weight = grid[g].method.guidance_weight;
      cc.tightening = grid[g].tightening;
      cc.mismatch_factor = grid[g].mismatch;
      for (std::uint64_t test_seed : config.test_seeds) {
        for (std::size_t si = 0; si < suites.size(); ++si) {
          EpisodeResult r = run_episode(ckpt, cc, config.env, suites[si], episode_seed(train_seed, test_seed, si));
          r.method = grid[g].method.label();
          r.train_seed = train_seed;
          r.test_seed = test_seed;
          if (on_episode) on_episode(r);
          per_point[g].push_back(std::move(r));
        }
      }
    }
  }
  for (auto& eps : per_point) {
    result.rows.push_back(aggregate(eps));
    for (auto& e : eps) result.episodes.push_back(std::move(e));
  }
  return result;
}

}  // namespace

EvaluationResult evaluate(const ExperimentConfig& config, const std::vector<Demonstration>& demos,
                          const EpisodeCallback& on_episode) {
  std::vector<GridPoint> grid;
  for (const auto& m : config.methods) {
    for (bool t : config.tightening) {
      for (double f : config.mismatch_factors) grid.push_back({m, t, f});
    }
  }
  return run_grid(config, demos, grid, on_episode);
}

EvaluationResult ablate_model_mismatch(const ExperimentConfig& config, const std::vector<Demonstration>& demos,
                                       const EpisodeCallback& on_episode) {
  std::vector<GridPoint> grid;
  for (double f : config.ablation_factors) grid.push_back({MethodSpec{Method::dpcc_c, 0.0}, true, f});
  return run_grid(config, demos, grid, on_episode);
}

Json plot_data(const EvaluationResult& result, const ExperimentConfig& config) {
  Json rows = Json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"method", r.method},
                    {"tightening", r.tightening},
                    {"mismatch", r.mismatch},
                    {"episodes", r.episodes},
                    {"timesteps_mean", r.timesteps_mean},
                    {"timesteps_std", r.timesteps_std},
                    {"success_timesteps_mean", r.success_timesteps_mean},
                    {"success_timesteps_std", r.success_timesteps_std},
                    {"goal_rate", r.goal_rate},
                    {"cg_rate", r.cg_rate},
                    {"viol_mean", r.viol_mean},
                    {"viol_std", r.viol_std}});
  }
  Json traces = Json::array();
  const std::uint64_t first_test = config.test_seeds.empty() ? 0 : config.test_seeds.front();
  for (const auto& e : result.episodes) {
    if (e.test_seed == first_test) traces.push_back(episode_to_json(e, true));
  }
  Json suites = Json::array();
  for (const auto& s : config.env.suites) {
    Json prims = Json::array();
    for (const auto& p : s.primitives) prims.push_back(primitive_to_json(p));
    suites.push_back({{"name", s.name}, {"primitives", prims}});
  }
  Json obstacles = Json::array();
  for (const auto& o : config.env.obstacles) obstacles.push_back({{"center", {o.center[0], o.center[1]}}, {"radius", o.radius}});
  return Json{{"schema_version", kMetricsSchemaVersion},
              {"goal_y", config.env.goal_y},
              {"obstacles", obstacles},
              {"suites", suites},
              {"rows", rows},
              {"traces", traces}};
}

void write_evaluation(const std::filesystem::path& dir, const EvaluationResult& result,
                      const ExperimentConfig& config) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "metrics.csv");
    write_metrics_csv(out, result.rows, false);
  }
  {
    std::ofstream out(dir / "metrics_successful.csv");
    write_metrics_csv(out, result.rows, true);
  }
  {
    std::ofstream out(dir / "episodes.jsonl");
    for (const auto& e : result.episodes) out << episode_to_json(e).dump() << '\n';
  }
  write_json_file(dir / "plot_data.json", plot_data(result, config));
}

}  // namespace dpcc
