#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dpcc/core/constraints.hpp"
#include "dpcc/core/trajectory.hpp"

namespace dpcc {

/// Per-dimension limit normalization x_n = 2 (x - lower)/(upper - lower) - 1,
/// kept separately for states and actions.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(Eigen::VectorXd state_lower, Eigen::VectorXd state_upper, Eigen::VectorXd action_lower,
             Eigen::VectorXd action_upper);

  /// Fits limits to the data. Dimensions listed together in one of
  /// `shared_state_groups` get a common width (each interval widened about
  /// its midpoint) so that disks over those coordinates stay disks.
  /// Constant dimensions are padded by 1e-6 on both sides.
  static Normalizer fit(const std::vector<Trajectory>& dataset,
                        const std::vector<std::vector<int>>& shared_state_groups = {});

  int state_dim() const { return static_cast<int>(state_lower_.size()); }
  int action_dim() const { return static_cast<int>(action_lower_.size()); }

  const Eigen::VectorXd& state_lower() const { return state_lower_; }
  const Eigen::VectorXd& state_upper() const { return state_upper_; }
  const Eigen::VectorXd& action_lower() const { return action_lower_; }
  const Eigen::VectorXd& action_upper() const { return action_upper_; }

  /// Half-widths: raw = center + half_width * normalized.
  Eigen::VectorXd state_half_width() const { return 0.5 * (state_upper_ - state_lower_); }
  Eigen::VectorXd state_center() const { return 0.5 * (state_upper_ + state_lower_); }
  Eigen::VectorXd action_half_width() const { return 0.5 * (action_upper_ - action_lower_); }
  Eigen::VectorXd action_center() const { return 0.5 * (action_upper_ + action_lower_); }

  Eigen::VectorXd normalize_state(const Eigen::VectorXd& s) const;
  Eigen::VectorXd denormalize_state(const Eigen::VectorXd& s) const;
  Eigen::VectorXd normalize_action(const Eigen::VectorXd& a) const;
  Eigen::VectorXd denormalize_action(const Eigen::VectorXd& a) const;

  Trajectory normalize(const Trajectory& raw) const;
  Trajectory denormalize(const Trajectory& normalized) const;

 private:
  Eigen::VectorXd state_lower_, state_upper_, action_lower_, action_upper_;
};

/// Affine image of a raw-unit constraint set in normalized coordinates.
/// Throws std::invalid_argument if a disk spans coordinates with different scales.
StageConstraintSet normalize_constraints(const StageConstraintSet& raw, const Normalizer& normalizer);
ConstraintPrimitive normalize_state_primitive(const ConstraintPrimitive& raw,
                                              const Normalizer& normalizer);

}  // namespace dpcc
