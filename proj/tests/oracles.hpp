#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance binary. They trade speed for obviousness.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "dpcc/core/random.hpp"
#include "dpcc/projection/projection.hpp"

namespace oracle {

/// Length-2 trajectory (H = 1) with 2-D states and actions, random linear
/// dynamics, a box and a halfspace on s_1 and an action box. Built around a
/// known feasible point so the feasible set is never empty.
struct TinyInstance {
  dpcc::FeasibleSetSpec spec;
  Eigen::VectorXd tau;  // point to project
};

inline TinyInstance random_tiny_instance(dpcc::Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int ds = 2, da = 2;
  const dpcc::TrajectoryShape shape{2, ds, da};
  dpcc::AffineDynamics f;
  f.A = Eigen::MatrixXd::Identity(ds, ds) + 0.3 * Eigen::MatrixXd::NullaryExpr(ds, ds, [&] { return u(rng); });
  f.B = 0.5 * Eigen::MatrixXd::NullaryExpr(ds, da, [&] { return u(rng); });
  f.c = 0.2 * Eigen::VectorXd::NullaryExpr(ds, [&] { return u(rng); });

  const Eigen::VectorXd s0 = Eigen::VectorXd::NullaryExpr(ds, [&] { return u(rng); });
  const Eigen::VectorXd a_star = 0.5 * Eigen::VectorXd::NullaryExpr(da, [&] { return u(rng); });
  const Eigen::VectorXd s1_star = f.step(s0, a_star);

  // Action box around the feasible action, state box and halfspace around s1*.
  const Eigen::VectorXd a_lo = a_star.array() - 0.2 - 0.5 * (u(rng) + 1.0);
  const Eigen::VectorXd a_hi = a_star.array() + 0.2 + 0.5 * (u(rng) + 1.0);
  const Eigen::VectorXd s_lo = s1_star.array() - 0.05 - 0.4 * (u(rng) + 1.0);
  const Eigen::VectorXd s_hi = s1_star.array() + 0.05 + 0.4 * (u(rng) + 1.0);
  Eigen::VectorXd n = Eigen::VectorXd::NullaryExpr(ds, [&] { return u(rng); });
  if (n.norm() < 1e-3) n[0] = 1.0;
  const double off = n.dot(s1_star) + 0.3 * (u(rng) + 1.0);

  dpcc::StageConstraintSet cs;
  const std::vector<dpcc::ConstraintPrimitive> prims{dpcc::make_box(s_lo, s_hi), dpcc::make_halfspace(n, off)};
  cs.state_constraints = {prims, prims};
  cs.action_box = dpcc::make_box(a_lo, a_hi);

  TinyInstance inst;
  inst.spec.shape = shape;
  inst.spec.constraints = cs;
  inst.spec.dynamics = f;
  inst.spec.fixed_state = s0;
  inst.tau = 1.5 * Eigen::VectorXd::NullaryExpr(shape.flat_size(), [&] { return u(rng); });
  return inst;
}

/// Exact projection cost of a TinyInstance by enumerating active sets of the
/// KKT system. Unknowns are x = (a_0, a_1); s_0 is pinned and s_1 = A s_0 + B a_0 + c.
inline double kkt_enumeration_cost(const TinyInstance& inst, Eigen::VectorXd* best_tau = nullptr) {
  const auto& sh = inst.spec.shape;
  const int ds = sh.state_dim, da = sh.action_dim, n = 2 * da;
  const auto& f = *inst.spec.dynamics;
  const Eigen::VectorXd& s0 = inst.spec.fixed_state;
  const Eigen::VectorXd s0_bar = inst.tau.segment(sh.state_index(0, 0), ds);
  const Eigen::VectorXd a0_bar = inst.tau.segment(sh.action_index(0, 0), da);
  const Eigen::VectorXd s1_bar = inst.tau.segment(sh.state_index(1, 0), ds);
  const Eigen::VectorXd a1_bar = inst.tau.segment(sh.action_index(1, 0), da);

  // cost(x) = |x - xbar|^2 + |M x + m - s1_bar|^2 + |s0 - s0_bar|^2 with M = [B 0].
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(ds, n);
  M.leftCols(da) = f.B;
  const Eigen::VectorXd m = f.A * s0 + f.c;
  Eigen::VectorXd xbar(n);
  xbar << a0_bar, a1_bar;
  const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n) + M.transpose() * M;
  const Eigen::VectorXd q = xbar + M.transpose() * (s1_bar - m);  // minimize 1/2 x'Hx - q'x (scaled)

  // Rows C x <= d.
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  const auto& box_a = inst.spec.constraints.action_box;
  for (int t = 0; t < 2; ++t) {
    for (int j = 0; j < da; ++j) {
      Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
      r[t * da + j] = 1.0;
      rows.push_back(r);
      rhs.push_back(box_a.upper[j]);
      rows.push_back(-r);
      rhs.push_back(-box_a.lower[j]);
    }
  }
  for (const auto& p : inst.spec.constraints.state_constraints[1]) {
    if (const auto* b = std::get_if<dpcc::Box>(&p)) {
      for (int i = 0; i < ds; ++i) {
        rows.push_back(M.row(i).transpose());
        rhs.push_back(b->upper[i] - m[i]);
        rows.push_back(-M.row(i).transpose());
        rhs.push_back(-(b->lower[i] - m[i]));
      }
    } else if (const auto* h = std::get_if<dpcc::Halfspace>(&p)) {
      rows.push_back(M.transpose() * h->normal);
      rhs.push_back(h->offset - h->normal.dot(m));
    }
  }
  const int nc = static_cast<int>(rows.size());

  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  std::vector<int> subset;
  std::function<void(int)> recurse = [&](int start) {
    const int k = static_cast<int>(subset.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd r(n + k);
    K.topLeftCorner(n, n) = H;
    r.head(n) = q;
    for (int i = 0; i < k; ++i) {
      K.block(0, n + i, n, 1) = rows[subset[i]];
      K.block(n + i, 0, 1, n) = rows[subset[i]].transpose();
      r[n + i] = rhs[subset[i]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (lu.isInvertible()) {
      const Eigen::VectorXd sol = lu.solve(r);
      const Eigen::VectorXd x = sol.head(n);
      bool ok = (sol.tail(k).array() >= -1e-9).all();  // K [x; l] = [q; d] with l >= 0
      for (int i = 0; i < nc && ok; ++i) ok = rows[i].dot(x) <= rhs[i] + 1e-9;
      if (ok) {
        const Eigen::VectorXd s1 = M * x + m;
        const double cost = (x - xbar).squaredNorm() + (s1 - s1_bar).squaredNorm() + (s0 - s0_bar).squaredNorm();
        if (cost < best) {
          best = cost;
          best_x = x;
        }
      }
    }
    if (k == n) return;
    for (int i = start; i < nc; ++i) {
      subset.push_back(i);
      recurse(i + 1);
      subset.pop_back();
    }
  };
  recurse(0);

  if (best_tau && best_x.size() == n) {
    Eigen::VectorXd tau(sh.flat_size());
    tau.segment(sh.state_index(0, 0), ds) = s0;
    tau.segment(sh.action_index(0, 0), da) = best_x.head(da);
    tau.segment(sh.state_index(1, 0), ds) = M * best_x + m;
    tau.segment(sh.action_index(1, 0), da) = best_x.tail(da);
    *best_tau = tau;
  }
  return best;
}

/// Central-difference gradient of a scalar function.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y[i] = x[i] + h;
    const double up = f(y);
    y[i] = x[i] - h;
    const double down = f(y);
    y[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest |a_i - b_i| / max(|a_i|, |b_i|, floor).
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-7) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
