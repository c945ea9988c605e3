#pragma once

#include <Eigen/Dense>
#include <vector>

namespace dpcc {

enum class QpStatus { optimal, infeasible, iteration_limit };

struct QpResult {
  QpStatus status = QpStatus::iteration_limit;
  Eigen::VectorXd x;
  std::vector<int> active;      // indices into the constraint rows
  Eigen::VectorXd multipliers;  // one per active constraint, >= 0
  int iterations = 0;
};

/// Dense strictly convex QP
///
///   minimize 1/2 x'Gx + c'x   subject to   A x <= b
///
/// solved with the Goldfarb-Idnani dual active-set method. G must be
/// symmetric positive definite. Starting from the unconstrained minimizer,
/// the most violated constraint is added each outer iteration; the dual step
/// drops active constraints whose multipliers would turn negative. An empty
/// feasible region is detected when no primal or dual step exists.
QpResult solve_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                  const Eigen::VectorXd& b, double feasibility_tol = 1e-10, int max_iterations = 0);

}  // namespace dpcc
