#include "dpcc/core/normalizer.hpp"

#include <cmath>
#include <stdexcept>

namespace dpcc {

namespace {

constexpr double kDegeneratePad = 1e-6;

void check_limits(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const char* what) {
  if (lo.size() != hi.size()) throw std::invalid_argument(std::string(what) + " limit sizes differ");
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!(hi[i] > lo[i])) throw std::invalid_argument(std::string(what) + " limits need upper > lower");
  }
}

void pad_degenerate(Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (hi[i] - lo[i] < kDegeneratePad) {
      lo[i] -= kDegeneratePad;
      hi[i] += kDegeneratePad;
    }
  }
}

Eigen::VectorXd to_unit(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
  if (x.size() != lo.size()) throw std::invalid_argument("normalize: dimension mismatch");
  return (2.0 * (x - lo).array() / (hi - lo).array() - 1.0).matrix();
}

Eigen::VectorXd from_unit(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi) {
  if (x.size() != lo.size()) throw std::invalid_argument("denormalize: dimension mismatch");
  return ((x.array() + 1.0) * (hi - lo).array() / 2.0 + lo.array()).matrix();
}

}  // namespace

Normalizer::Normalizer(Eigen::VectorXd state_lower, Eigen::VectorXd state_upper,
                       Eigen::VectorXd action_lower, Eigen::VectorXd action_upper)
    : state_lower_(std::move(state_lower)),
      state_upper_(std::move(state_upper)),
      action_lower_(std::move(action_lower)),
      action_upper_(std::move(action_upper)) {
  check_limits(state_lower_, state_upper_, "state");
  check_limits(action_lower_, action_upper_, "action");
}

Normalizer Normalizer::fit(const std::vector<Trajectory>& dataset,
                           const std::vector<std::vector<int>>& shared_state_groups) {
  if (dataset.empty()) throw std::invalid_argument("normalizer_fit: empty dataset");
  const auto shape = dataset.front().shape();
  Eigen::VectorXd slo = Eigen::VectorXd::Constant(shape.state_dim, INFINITY);
  Eigen::VectorXd shi = Eigen::VectorXd::Constant(shape.state_dim, -INFINITY);
  Eigen::VectorXd alo = Eigen::VectorXd::Constant(shape.action_dim, INFINITY);
  Eigen::VectorXd ahi = Eigen::VectorXd::Constant(shape.action_dim, -INFINITY);
  for (const auto& tau : dataset) {
    if (tau.states.cols() != shape.state_dim || tau.actions.cols() != shape.action_dim) {
      throw std::invalid_argument("normalizer_fit: inconsistent dimensions");
    }
    if (tau.length() == 0) continue;
    slo = slo.cwiseMin(tau.states.colwise().minCoeff().transpose());
    shi = shi.cwiseMax(tau.states.colwise().maxCoeff().transpose());
    alo = alo.cwiseMin(tau.actions.colwise().minCoeff().transpose());
    ahi = ahi.cwiseMax(tau.actions.colwise().maxCoeff().transpose());
  }
  if (!slo.allFinite() || !alo.allFinite()) {
    throw std::invalid_argument("normalizer_fit: dataset has no finite samples");
  }
  pad_degenerate(slo, shi);
  pad_degenerate(alo, ahi);

  for (const auto& group : shared_state_groups) {
    double width = 0.0;
    for (int i : group) {
      if (i < 0 || i >= shape.state_dim) throw std::invalid_argument("shared group index out of range");
      width = std::max(width, shi[i] - slo[i]);
    }
    for (int i : group) {
      const double mid = 0.5 * (shi[i] + slo[i]);
      slo[i] = mid - 0.5 * width;
      shi[i] = mid + 0.5 * width;
    }
  }
  return Normalizer(slo, shi, alo, ahi);
}

Eigen::VectorXd Normalizer::normalize_state(const Eigen::VectorXd& s) const {
  return to_unit(s, state_lower_, state_upper_);
}
Eigen::VectorXd Normalizer::denormalize_state(const Eigen::VectorXd& s) const {
  return from_unit(s, state_lower_, state_upper_);
}
Eigen::VectorXd Normalizer::normalize_action(const Eigen::VectorXd& a) const {
  return to_unit(a, action_lower_, action_upper_);
}
Eigen::VectorXd Normalizer::denormalize_action(const Eigen::VectorXd& a) const {
  return from_unit(a, action_lower_, action_upper_);
}

Trajectory Normalizer::normalize(const Trajectory& raw) const {
  Trajectory out = raw;
  for (int t = 0; t < raw.length(); ++t) {
    out.states.row(t) = normalize_state(raw.states.row(t).transpose()).transpose();
    out.actions.row(t) = normalize_action(raw.actions.row(t).transpose()).transpose();
  }
  return out;
}

Trajectory Normalizer::denormalize(const Trajectory& normalized) const {
  Trajectory out = normalized;
  for (int t = 0; t < normalized.length(); ++t) {
    out.states.row(t) = denormalize_state(normalized.states.row(t).transpose()).transpose();
    out.actions.row(t) = denormalize_action(normalized.actions.row(t).transpose()).transpose();
  }
  return out;
}

namespace {

Box normalize_box(const Box& b, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (b.lower.size() != lo.size()) throw std::invalid_argument("box dimension mismatch");
  Box out = b;
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    // Infinite bounds map to themselves under the positive affine scaling.
    out.lower[i] = 2.0 * (b.lower[i] - lo[i]) / (hi[i] - lo[i]) - 1.0;
    out.upper[i] = 2.0 * (b.upper[i] - lo[i]) / (hi[i] - lo[i]) - 1.0;
  }
  return out;
}

}  // namespace

ConstraintPrimitive normalize_state_primitive(const ConstraintPrimitive& raw,
                                              const Normalizer& normalizer) {
  const Eigen::VectorXd half = normalizer.state_half_width();
  const Eigen::VectorXd mid = normalizer.state_center();
  if (const auto* h = std::get_if<Halfspace>(&raw)) {
    if (h->normal.size() != half.size()) throw std::invalid_argument("halfspace dimension mismatch");
    // raw s = mid + half .* s_n  =>  (half .* a) . s_n <= b - a . mid
    return Halfspace{h->normal.cwiseProduct(half), h->offset - h->normal.dot(mid)};
  }
  if (const auto* b = std::get_if<Box>(&raw)) {
    return normalize_box(*b, normalizer.state_lower(), normalizer.state_upper());
  }
  const auto& d = std::get<AvoidDisk>(raw);
  const int i = d.coords[0];
  const int j = d.coords[1];
  if (i >= half.size() || j >= half.size()) throw std::invalid_argument("disk coordinate out of range");
  if (std::abs(half[i] - half[j]) > 1e-12 * std::max(half[i], half[j])) {
    throw std::invalid_argument("disk coordinates must share one normalization scale");
  }
  AvoidDisk out = d;
  out.center = Eigen::Vector2d((d.center[0] - mid[i]) / half[i], (d.center[1] - mid[j]) / half[j]);
  out.radius = d.radius / half[i];
  return out;
}

StageConstraintSet normalize_constraints(const StageConstraintSet& raw,
                                         const Normalizer& normalizer) {
  StageConstraintSet out;
  out.state_constraints.reserve(raw.state_constraints.size());
  for (const auto& stage : raw.state_constraints) {
    std::vector<ConstraintPrimitive> prims;
    prims.reserve(stage.size());
    for (const auto& p : stage) prims.push_back(normalize_state_primitive(p, normalizer));
    out.state_constraints.push_back(std::move(prims));
  }
  out.action_box = normalize_box(raw.action_box, normalizer.action_lower(), normalizer.action_upper());
  return out;
}

}  // namespace dpcc
