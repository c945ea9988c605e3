#pragma once

#include <Eigen/Dense>
#include <array>
#include <variant>
#include <vector>

namespace dpcc {

/// normal . x <= offset
struct Halfspace {
  Eigen::VectorXd normal;
  double offset = 0.0;
};

/// lower <= x <= upper, entries may be infinite.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// ||(x[coords[0]], x[coords[1]]) - center|| >= radius
struct AvoidDisk {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.0;
  std::array<int, 2> coords{0, 1};
};

using ConstraintPrimitive = std::variant<Halfspace, Box, AvoidDisk>;

Halfspace make_halfspace(Eigen::VectorXd normal, double offset);
Box make_box(Eigen::VectorXd lower, Eigen::VectorXd upper);
AvoidDisk make_avoid_disk(Eigen::Vector2d center, double radius, std::array<int, 2> coords = {0, 1});

/// Throws std::invalid_argument when a primitive breaks its invariant
/// (zero halfspace normal, box with lower > upper, non-positive disk radius).
void validate(const ConstraintPrimitive& primitive);

/// Nonnegative violation magnitude of `x`; zero iff x satisfies the primitive.
/// Halfspace: max(0, a.x - b). Box: Euclidean norm of the componentwise excess.
/// AvoidDisk: max(0, r - ||x - p||).
double violation(const ConstraintPrimitive& primitive, const Eigen::VectorXd& x);

/// Per-timestep state constraints (index 0..H) plus one action box.
struct StageConstraintSet {
  std::vector<std::vector<ConstraintPrimitive>> state_constraints;
  Box action_box;

  int length() const { return static_cast<int>(state_constraints.size()); }

  /// Same primitive list at every step index 0..length-1.
  static StageConstraintSet time_invariant(int length, const std::vector<ConstraintPrimitive>& prims,
                                           Box action_box);

  /// Whole space: no state constraints and an unbounded action box.
  static StageConstraintSet unconstrained(int length, int action_dim);
};

/// Smallest box containing every row of `samples`.
Box bounding_box(const Eigen::MatrixXd& samples);

}  // namespace dpcc
