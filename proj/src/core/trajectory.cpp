#include "dpcc/core/trajectory.hpp"

#include <stdexcept>
#include <string>

namespace dpcc {

Trajectory Trajectory::zeros(const TrajectoryShape& shape, int origin_time) {
  Trajectory tau;
  tau.states = Eigen::MatrixXd::Zero(shape.length, shape.state_dim);
  tau.actions = Eigen::MatrixXd::Zero(shape.length, shape.action_dim);
  tau.origin_time = origin_time;
  return tau;
}

Trajectory Trajectory::unflatten(const Eigen::VectorXd& flat, const TrajectoryShape& shape,
                                 int origin_time) {
  if (flat.size() != shape.flat_size()) {
    throw std::invalid_argument("unflatten: expected " + std::to_string(shape.flat_size()) +
                                " entries, got " + std::to_string(flat.size()));
  }
  Trajectory tau = zeros(shape, origin_time);
  for (int t = 0; t < shape.length; ++t) {
    for (int i = 0; i < shape.state_dim; ++i) tau.states(t, i) = flat[shape.state_index(t, i)];
    for (int j = 0; j < shape.action_dim; ++j) tau.actions(t, j) = flat[shape.action_index(t, j)];
  }
  return tau;
}

TrajectoryShape Trajectory::shape() const {
  return {static_cast<int>(states.rows()), static_cast<int>(states.cols()),
          static_cast<int>(actions.cols())};
}

Eigen::VectorXd Trajectory::flatten() const {
  const TrajectoryShape s = shape();
  Eigen::VectorXd flat(s.flat_size());
  for (int t = 0; t < s.length; ++t) {
    for (int i = 0; i < s.state_dim; ++i) flat[s.state_index(t, i)] = states(t, i);
    for (int j = 0; j < s.action_dim; ++j) flat[s.action_index(t, j)] = actions(t, j);
  }
  return flat;
}

void Trajectory::validate() const {
  if (states.rows() != actions.rows()) {
    throw std::invalid_argument("trajectory: state and action row counts differ");
  }
  if (!states.allFinite() || !actions.allFinite()) {
    throw std::invalid_argument("trajectory: non-finite entries");
  }
}

Trajectory Trajectory::window(int start, int len) const {
  if (start < 0 || len < 0 || start + len > length()) {
    throw std::out_of_range("trajectory window out of range");
  }
  Trajectory w;
  w.states = states.middleRows(start, len);
  w.actions = actions.middleRows(start, len);
  w.origin_time = origin_time + start;
  return w;
}

}  // namespace dpcc
