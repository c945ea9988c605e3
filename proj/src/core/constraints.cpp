#include "dpcc/core/constraints.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpcc {

Halfspace make_halfspace(Eigen::VectorXd normal, double offset) {
  Halfspace h{std::move(normal), offset};
  validate(h);
  return h;
}

Box make_box(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  Box b{std::move(lower), std::move(upper)};
  validate(b);
  return b;
}

AvoidDisk make_avoid_disk(Eigen::Vector2d center, double radius, std::array<int, 2> coords) {
  AvoidDisk d{center, radius, coords};
  validate(d);
  return d;
}

namespace {

struct Validator {
  void operator()(const Halfspace& h) const {
    if (h.normal.size() == 0 || h.normal.norm() == 0.0) {
      throw std::invalid_argument("halfspace normal must be nonzero");
    }
  }
  void operator()(const Box& b) const {
    if (b.lower.size() != b.upper.size()) throw std::invalid_argument("box bound sizes differ");
    for (Eigen::Index i = 0; i < b.lower.size(); ++i) {
      if (b.lower[i] > b.upper[i]) throw std::invalid_argument("box has lower > upper");
    }
  }
  void operator()(const AvoidDisk& d) const {
    if (!(d.radius > 0.0)) throw std::invalid_argument("avoid-disk radius must be positive");
    if (d.coords[0] < 0 || d.coords[1] < 0 || d.coords[0] == d.coords[1]) {
      throw std::invalid_argument("avoid-disk needs two distinct coordinate indices");
    }
  }
};

struct ViolationOf {
  const Eigen::VectorXd& x;

  double operator()(const Halfspace& h) const { return std::max(0.0, h.normal.dot(x) - h.offset); }
  double operator()(const Box& b) const {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double e = std::max({0.0, b.lower[i] - x[i], x[i] - b.upper[i]});
      sq += e * e;
    }
    return std::sqrt(sq);
  }
  double operator()(const AvoidDisk& d) const {
    const Eigen::Vector2d q(x[d.coords[0]], x[d.coords[1]]);
    return std::max(0.0, d.radius - (q - d.center).norm());
  }
};

}  // namespace

void validate(const ConstraintPrimitive& primitive) { std::visit(Validator{}, primitive); }

double violation(const ConstraintPrimitive& primitive, const Eigen::VectorXd& x) {
  return std::visit(ViolationOf{x}, primitive);
}

StageConstraintSet StageConstraintSet::time_invariant(int length,
                                                      const std::vector<ConstraintPrimitive>& prims,
                                                      Box action_box) {
  StageConstraintSet set;
  set.state_constraints.assign(length, prims);
  set.action_box = std::move(action_box);
  return set;
}

StageConstraintSet StageConstraintSet::unconstrained(int length, int action_dim) {
  const double inf = std::numeric_limits<double>::infinity();
  return time_invariant(length, {},
                        Box{Eigen::VectorXd::Constant(action_dim, -inf),
                            Eigen::VectorXd::Constant(action_dim, inf)});
}

Box bounding_box(const Eigen::MatrixXd& samples) {
  if (samples.rows() == 0) throw std::invalid_argument("bounding_box: no samples");
  return Box{samples.colwise().minCoeff().transpose(), samples.colwise().maxCoeff().transpose()};
}

}  // namespace dpcc
