#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "dpcc/core/constraints.hpp"
#include "dpcc/core/dynamics.hpp"
#include "dpcc/core/trajectory.hpp"

namespace dpcc {

/// Feasible trajectory set: stage constraints (index 0..H), optional nominal
/// dynamics, and the measured state that the first-state slot is pinned to.
/// Stage-0 state constraints are not enforced: that slot is the measurement.
struct FeasibleSetSpec {
  TrajectoryShape shape;
  StageConstraintSet constraints;
  std::optional<AffineDynamics> dynamics;  // present iff the projection is model-based
  Eigen::VectorXd fixed_state;
  bool tightened = false;

  bool use_dynamics() const { return dynamics.has_value(); }
  /// Throws std::invalid_argument when stage count or dimensions disagree with the shape.
  void validate() const;
};

struct ProjectionSettings {
  int max_iterations = 50;
  double feasibility_tol = 1e-6;
  double step_tol = 1e-8;
  double damping = 0.5;
  int max_damping_halvings = 6;
  double qp_tol = 1e-10;
};

enum class ProjectionStatus {
  converged,
  iteration_limit,       // budget exhausted; best iterate returned
  subproblem_infeasible, // a linearized subproblem had no solution
  infeasible,            // feasible set provably empty
};

const char* to_string(ProjectionStatus status);

struct ProjectionResult {
  Eigen::VectorXd projected;  // flat trajectory
  double cost = 0.0;          // ||input - projected||^2
  int iterations = 0;
  bool converged = false;
  double max_violation = 0.0;  // over enforced inequalities
  ProjectionStatus status = ProjectionStatus::iteration_limit;
};

/// Minkowski erosion of every state primitive at steps 1..H by the l2 ball of
/// radius gamma. Halfspace (a, b) -> (a, b - gamma |a|); box bounds move
/// inward by gamma; avoid-disk radius grows by gamma. The action box and the
/// measured-state step 0 are left as they are. Throws EmptySetError when a
/// box erodes past itself and std::invalid_argument for gamma < 0.
StageConstraintSet tighten(const StageConstraintSet& constraints, double gamma);
ConstraintPrimitive tighten(const ConstraintPrimitive& primitive, double gamma);

/// Model-based projection: nearest trajectory (squared l2 over all state and
/// action entries) obeying the dynamics from the pinned first state and every
/// stage constraint. States are eliminated through the affine dynamics so the
/// unknowns are the actions; avoid-disks are handled by sequential convex
/// subproblems (each disk replaced by its supporting halfspace at the current
/// iterate) solved with the dual active-set QP.
ProjectionResult project_model_based(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec,
                                     const ProjectionSettings& settings = {});
ProjectionResult project_model_based(const Trajectory& tau, const FeasibleSetSpec& spec,
                                     const ProjectionSettings& settings = {});

/// Pointwise projection ignoring dynamics: each state (steps >= 1) onto its
/// stage set, each action onto the action box.
ProjectionResult project_model_free(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec);

/// Dispatches on spec.use_dynamics().
ProjectionResult project(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec,
                         const ProjectionSettings& settings = {});

/// ||tau - Pi(tau)||^2. Throws InfeasibleProjection when the set is provably empty.
double projection_cost(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec,
                       const ProjectionSettings& settings = {});

/// One magnitude per primitive; see `violation`.
std::vector<double> violation_report(const Eigen::VectorXd& state,
                                     const std::vector<ConstraintPrimitive>& primitives);

/// Largest stage-constraint (steps >= 1) or action-box violation of a flat trajectory.
double max_constraint_violation(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec);

/// Largest |s_{k+1} - f(s_k, a_k)| entry over the trajectory.
double dynamics_residual(const Eigen::VectorXd& tau, const TrajectoryShape& shape,
                         const AffineDynamics& dynamics);

/// Euclidean point projection onto one primitive (disk centre ties push along +x).
Eigen::VectorXd project_point(const ConstraintPrimitive& primitive, const Eigen::VectorXd& x);

}  // namespace dpcc
