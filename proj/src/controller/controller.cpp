#include "dpcc/controller/controller.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpcc/core/dynamics.hpp"
#include "dpcc/core/errors.hpp"
#include "dpcc/diffusion/ddpm.hpp"

namespace dpcc {

namespace {

struct MethodName {
  Method method;
  const char* name;
};

constexpr MethodName kMethodNames[] = {
    {Method::dpcc_r, "dpcc-r"},       {Method::dpcc_t, "dpcc-t"},
    {Method::dpcc_c, "dpcc-c"},       {Method::diffuser, "diffuser"},
    {Method::guidance, "guidance"},   {Method::post_processing, "post-processing"},
    {Method::model_free, "model-free"},
};

}  // namespace

const char* to_string(Method method) {
  for (const auto& m : kMethodNames) {
    if (m.method == method) return m.name;
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  for (const auto& m : kMethodNames) {
    if (name == m.name) return m.method;
  }
  throw ConfigError("unknown method '" + name + "'");
}

bool is_dpcc(Method method) {
  return method == Method::dpcc_r || method == Method::dpcc_t || method == Method::dpcc_c;
}

void ControllerConfig::validate() const {
  if (batch < 1) throw ConfigError("controller: batch must be >= 1");
  if (!(gamma >= 0.0)) throw ConfigError("controller: gamma must be >= 0");
  if (!(guidance_weight >= 0.0)) throw ConfigError("controller: guidance weight must be >= 0");
  if (!(sample_time > 0.0)) throw ConfigError("controller: sample time must be > 0");
  if (!(mismatch_factor > 0.0)) throw ConfigError("controller: mismatch factor must be > 0");
}

// ------------------------------------------------------------- denoising

namespace {

// Projection used inside the denoising loop, with the model-free fallback.
ProjectionResult project_with_fallback(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec,
                                       const ProjectionSettings& settings, bool& used_fallback) {
  ProjectionResult r = project(tau, spec, settings);
  used_fallback = false;
  if (spec.use_dynamics() && !r.converged && r.max_violation > settings.feasibility_tol) {
    const ProjectionStatus status = r.status;
    r = project_model_free(r.projected, spec);
    r.cost = (tau - r.projected).squaredNorm();
    r.status = status;
    r.converged = false;
    used_fallback = true;
  }
  return r;
}

}  // namespace

DenoiseBatch denoise_projected(const DenoiserNet& net, const NoiseSchedule& schedule,
                               const FeasibleSetSpec& spec, int batch, Rng& rng,
                               const ProjectionSettings& settings, const ProjectionObserver& observer) {
  spec.validate();
  DenoiseBatch out;
  out.costs.assign(static_cast<std::size_t>(batch), 0.0);
  out.converged.assign(static_cast<std::size_t>(batch), 1);
  out.fallback.assign(static_cast<std::size_t>(batch), 0);

  DenoiseHooks hooks;
  hooks.after_step = [&](int k, int chain, Eigen::VectorXd& tau) {
    bool fb = false;
    ProjectionResult r = project_with_fallback(tau, spec, settings, fb);
    if (observer) observer(k, chain, tau, r);
    const auto j = static_cast<std::size_t>(chain);
    out.costs[j] += r.cost;
    if (!r.converged) out.converged[j] = 0;
    if (fb) out.fallback[j] = 1;
    tau = std::move(r.projected);
  };
  out.samples = run_backward_process(net, schedule, spec.shape, spec.fixed_state, batch, rng, hooks);
  return out;
}

double constraint_penalty(const Eigen::VectorXd& tau, const TrajectoryShape& shape,
                          const StageConstraintSet& constraints, Eigen::VectorXd* grad) {
  if (grad) grad->setZero(tau.size());
  double total = 0.0;
  const Box& abox = constraints.action_box;
  for (int k = 0; k < shape.length; ++k) {
    const Eigen::Index ai = shape.action_index(k, 0);
    for (int j = 0; j < shape.action_dim; ++j) {
      const double x = tau[ai + j];
      double excess = 0.0;
      if (x > abox.upper[j]) excess = x - abox.upper[j];
      if (x < abox.lower[j]) excess = x - abox.lower[j];
      total += excess * excess;
      if (grad) (*grad)[ai + j] += 2.0 * excess;
    }
    if (k == 0) continue;
    const Eigen::Index si = shape.state_index(k, 0);
    const Eigen::VectorXd s = tau.segment(si, shape.state_dim);
    for (const auto& p : constraints.state_constraints[static_cast<std::size_t>(k)]) {
      if (const auto* h = std::get_if<Halfspace>(&p)) {
        const double v = std::max(0.0, h->normal.dot(s) - h->offset);
        total += v * v;
        if (grad && v > 0.0) grad->segment(si, shape.state_dim) += 2.0 * v * h->normal;
      } else if (const auto* b = std::get_if<Box>(&p)) {
        for (Eigen::Index i = 0; i < s.size(); ++i) {
          double excess = 0.0;
          if (s[i] > b->upper[i]) excess = s[i] - b->upper[i];
          if (s[i] < b->lower[i]) excess = s[i] - b->lower[i];
          total += excess * excess;
          if (grad) (*grad)[si + i] += 2.0 * excess;
        }
      } else {
        const auto& d = std::get<AvoidDisk>(p);
        const Eigen::Vector2d delta(s[d.coords[0]] - d.center[0], s[d.coords[1]] - d.center[1]);
        const double dist = delta.norm();
        const double v = std::max(0.0, d.radius - dist);
        total += v * v;
        if (grad && v > 0.0) {
          const Eigen::Vector2d dir = dist > 1e-12 ? Eigen::Vector2d(delta / dist) : Eigen::Vector2d(1.0, 0.0);
          (*grad)[si + d.coords[0]] -= 2.0 * v * dir[0];
          (*grad)[si + d.coords[1]] -= 2.0 * v * dir[1];
        }
      }
    }
  }
  return total;
}

Eigen::MatrixXd denoise_guided(const DenoiserNet& net, const NoiseSchedule& schedule,
                               const TrajectoryShape& shape, const Eigen::VectorXd& state,
                               const StageConstraintSet& constraints, double lambda, int batch,
                               Rng& rng) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("guidance: lambda must be >= 0");
  DenoiseHooks hooks;
  if (lambda > 0.0) {
    hooks.adjust_mean = [&](int k, int, Eigen::VectorXd& mean) {
      Eigen::VectorXd grad;
      if (constraint_penalty(mean, shape, constraints, &grad) > 0.0) {
        const double s = schedule.sigma(k);
        mean -= lambda * s * s * grad;
      }
    };
  }
  return run_backward_process(net, schedule, shape, state, batch, rng, hooks);
}

DenoiseBatch denoise_postprocess(const DenoiserNet& net, const NoiseSchedule& schedule,
                                 const FeasibleSetSpec& spec, int batch, Rng& rng,
                                 const ProjectionSettings& settings) {
  spec.validate();
  DenoiseBatch out;
  out.samples = run_backward_process(net, schedule, spec.shape, spec.fixed_state, batch, rng);
  out.costs.assign(static_cast<std::size_t>(batch), 0.0);
  out.converged.assign(static_cast<std::size_t>(batch), 1);
  out.fallback.assign(static_cast<std::size_t>(batch), 0);
  for (int j = 0; j < batch; ++j) {
    bool fb = false;
    ProjectionResult r = project_with_fallback(out.samples.col(j), spec, settings, fb);
    const auto i = static_cast<std::size_t>(j);
    out.costs[i] = r.cost;
    out.converged[i] = r.converged ? 1 : 0;
    out.fallback[i] = fb ? 1 : 0;
    out.samples.col(j) = r.projected;
  }
  return out;
}

// ------------------------------------------------------------- selection

int select_trajectory(const Eigen::MatrixXd& samples, const TrajectoryShape& shape, Method method,
                      const ControllerState& state, const std::vector<double>& costs, Rng& rng,
                      const std::vector<int>& eligible) {
  const int batch = static_cast<int>(samples.cols());
  if (batch < 1) throw std::invalid_argument("select_trajectory: empty batch");
  std::vector<int> pool = eligible;
  if (pool.empty()) {
    for (int j = 0; j < batch; ++j) pool.push_back(j);
  }

  auto argmin = [&](auto&& score) {
    int best = pool.front();
    double best_score = score(best);
    for (std::size_t i = 1; i < pool.size(); ++i) {
      const double s = score(pool[i]);
      if (s < best_score || (s == best_score && pool[i] < best)) {
        best = pool[i];
        best_score = s;
      }
    }
    return best;
  };

  if (method == Method::dpcc_c) {
    if (costs.size() != static_cast<std::size_t>(batch)) {
      throw std::invalid_argument("select_trajectory: one cost per candidate required");
    }
    return argmin([&](int j) { return costs[static_cast<std::size_t>(j)]; });
  }
  if (method == Method::dpcc_t && state.previous) {
    const Eigen::Index overlap = static_cast<Eigen::Index>(shape.length - 1) * shape.stride();
    const Eigen::VectorXd prev_tail = state.previous->tail(overlap);
    return argmin([&](int j) { return (samples.col(j).head(overlap) - prev_tail).norm(); });
  }
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

Json diagnostics_to_json(const StepDiagnostics& d) {
  Json converged = Json::array();
  Json fallback = Json::array();
  for (char c : d.converged) converged.push_back(c != 0);
  for (char c : d.fallback) fallback.push_back(c != 0);
  return Json{{"t", d.t},
              {"method", to_string(d.method)},
              {"selected", d.selected},
              {"costs", d.costs},
              {"converged", converged},
              {"fallback", fallback},
              {"flagged", d.flagged},
              {"action", vector_to_json(d.action)}};
}

// ------------------------------------------------------------- controller

Controller::Controller(Checkpoint checkpoint, ControllerConfig config,
                       const StageConstraintSet& raw_constraints, std::uint64_t seed)
    : checkpoint_(std::move(checkpoint)), config_(std::move(config)), rng_(seed) {
  config_.validate();
  const auto& shape = checkpoint_.shape;
  if (raw_constraints.length() != shape.length) {
    throw ConfigError("controller: constraint set must cover " + std::to_string(shape.length) + " steps");
  }
  raw_action_box_ = raw_constraints.action_box;
  true_ = normalize_constraints(raw_constraints, checkpoint_.normalizer);
  enforced_ = config_.tightening ? tighten(true_, config_.gamma) : true_;
  NominalDynamics nominal;
  nominal.sample_time = config_.sample_time * config_.mismatch_factor;
  nominal.state_dim = shape.state_dim;
  nominal.action_dim = shape.action_dim;
  model_ = nominal.affine().normalized(checkpoint_.normalizer);
}

void Controller::reset(std::uint64_t seed) {
  state_.reset();
  rng_.seed(seed);
}

FeasibleSetSpec Controller::feasible_set(const Eigen::VectorXd& normalized_state) const {
  FeasibleSetSpec spec;
  spec.shape = checkpoint_.shape;
  spec.constraints = enforced_;
  spec.fixed_state = normalized_state;
  spec.tightened = config_.tightening;
  if (config_.method != Method::model_free) spec.dynamics = model_;
  return spec;
}

ControlOutput Controller::step(const Eigen::VectorXd& raw_state) {
  if (!raw_state.allFinite()) throw NumericError("controller: non-finite state");
  const auto& shape = checkpoint_.shape;
  const auto& net = checkpoint_.net;
  const auto& schedule = checkpoint_.schedule;
  const int batch = config_.batch;
  const Eigen::VectorXd s = checkpoint_.normalizer.normalize_state(raw_state);

  DenoiseBatch result;
  switch (config_.method) {
    case Method::dpcc_r:
    case Method::dpcc_t:
    case Method::dpcc_c:
    case Method::model_free:
      result = denoise_projected(net, schedule, feasible_set(s), batch, rng_, config_.projection);
      break;
    case Method::post_processing:
      result = denoise_postprocess(net, schedule, feasible_set(s), batch, rng_, config_.projection);
      break;
    case Method::guidance:
    case Method::diffuser: {
      const double lambda = config_.method == Method::guidance ? config_.guidance_weight : 0.0;
      result.samples = denoise_guided(net, schedule, shape, s, enforced_, lambda, batch, rng_);
      result.costs.assign(static_cast<std::size_t>(batch), 0.0);
      result.converged.assign(static_cast<std::size_t>(batch), 1);
      result.fallback.assign(static_cast<std::size_t>(batch), 0);
      break;
    }
  }

  // Prefer candidates whose projections all converged.
  std::vector<int> eligible;
  for (int j = 0; j < batch; ++j) {
    if (result.converged[static_cast<std::size_t>(j)]) eligible.push_back(j);
  }
  const bool flagged = eligible.empty();
  const int selected = select_trajectory(result.samples, shape, config_.method, state_, result.costs, rng_,
                                         eligible);

  const Eigen::VectorXd chosen = result.samples.col(selected);
  Eigen::VectorXd action =
      checkpoint_.normalizer.denormalize_action(chosen.segment(shape.action_index(0, 0), shape.action_dim));
  action = action.cwiseMax(raw_action_box_.lower).cwiseMin(raw_action_box_.upper);

  ControlOutput out;
  out.action = action;
  auto& d = out.diagnostics;
  d.t = state_.step;
  d.method = config_.method;
  d.selected = selected;
  d.costs = result.costs;
  d.converged = result.converged;
  d.fallback = result.fallback;
  d.flagged = flagged;
  d.action = action;
  d.batch = std::move(result.samples);

  state_.previous = chosen;
  state_.previous_index = selected;
  ++state_.step;
  return out;
}

}  // namespace dpcc
