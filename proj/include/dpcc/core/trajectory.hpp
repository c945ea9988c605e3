#pragma once

#include <Eigen/Dense>

namespace dpcc {

/// Dimensions of a state-action trajectory of `length` = H+1 timesteps.
///
/// The flat layout is the dataset and checkpoint contract: row-major over
/// timesteps and, within a timestep, the state entries followed by the action
/// entries, i.e. [s_0, a_0, s_1, a_1, ..., s_H, a_H].
struct TrajectoryShape {
  int length = 0;
  int state_dim = 0;
  int action_dim = 0;

  int stride() const { return state_dim + action_dim; }
  int flat_size() const { return length * stride(); }
  int state_index(int t, int i) const { return t * stride() + i; }
  int action_index(int t, int j) const { return t * stride() + state_dim + j; }

  bool operator==(const TrajectoryShape&) const = default;
};

struct Trajectory {
  Eigen::MatrixXd states;   // length x state_dim
  Eigen::MatrixXd actions;  // length x action_dim
  int origin_time = 0;

  static Trajectory zeros(const TrajectoryShape& shape, int origin_time = 0);
  static Trajectory unflatten(const Eigen::VectorXd& flat, const TrajectoryShape& shape,
                              int origin_time = 0);

  TrajectoryShape shape() const;
  int length() const { return static_cast<int>(states.rows()); }
  Eigen::VectorXd flatten() const;

  /// Throws std::invalid_argument on row-count mismatch or non-finite entries.
  void validate() const;

  /// Sub-trajectory of `len` timesteps starting at `start`.
  Trajectory window(int start, int len) const;
};

}  // namespace dpcc
