#include "dpcc/core/dynamics.hpp"

#include <stdexcept>

#include "dpcc/core/normalizer.hpp"

namespace dpcc {

AffineDynamics AffineDynamics::normalized(const Normalizer& normalizer) const {
  if (normalizer.state_dim() != state_dim() || normalizer.action_dim() != action_dim()) {
    throw std::invalid_argument("dynamics/normalizer dimension mismatch");
  }
  const Eigen::VectorXd ds = normalizer.state_half_width();
  const Eigen::VectorXd ms = normalizer.state_center();
  const Eigen::VectorXd da = normalizer.action_half_width();
  const Eigen::VectorXd ma = normalizer.action_center();
  const Eigen::VectorXd inv_ds = ds.cwiseInverse();

  AffineDynamics out;
  out.A = inv_ds.asDiagonal() * A * ds.asDiagonal();
  out.B = inv_ds.asDiagonal() * B * da.asDiagonal();
  out.c = inv_ds.asDiagonal() * (A * ms + B * ma + c - ms);
  return out;
}

Eigen::VectorXd NominalDynamics::step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
  return affine().step(s, a);
}

AffineDynamics NominalDynamics::affine() const {
  if (state_dim % action_dim != 0) {
    throw std::invalid_argument("Euler model needs state_dim to be a multiple of action_dim");
  }
  AffineDynamics f;
  f.A = Eigen::MatrixXd::Identity(state_dim, state_dim);
  f.B = Eigen::MatrixXd::Zero(state_dim, action_dim);
  for (int blk = 0; blk < state_dim / action_dim; ++blk) {
    f.B.block(blk * action_dim, 0, action_dim, action_dim) =
        sample_time * Eigen::MatrixXd::Identity(action_dim, action_dim);
  }
  f.c = Eigen::VectorXd::Zero(state_dim);
  return f;
}

}  // namespace dpcc
