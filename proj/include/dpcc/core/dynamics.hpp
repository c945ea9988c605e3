#pragma once

#include <Eigen/Dense>

namespace dpcc {

class Normalizer;

/// s' = A s + B a + c
struct AffineDynamics {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd c;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int action_dim() const { return static_cast<int>(B.cols()); }
  Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
    return A * s + B * a + c;
  }

  /// The same map expressed in normalized state/action coordinates.
  AffineDynamics normalized(const Normalizer& normalizer) const;
};

/// Euler model of the point-mass plant: actual and desired positions both
/// integrate the commanded velocity, s' = s + [a; a] t_s.
struct NominalDynamics {
  double sample_time = 0.1;
  int state_dim = 4;
  int action_dim = 2;

  Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const;
  AffineDynamics affine() const;
};

}  // namespace dpcc
