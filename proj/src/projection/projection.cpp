#include "dpcc/projection/projection.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpcc/core/errors.hpp"
#include "dpcc/projection/qp.hpp"

namespace dpcc {

const char* to_string(ProjectionStatus status) {
  switch (status) {
    case ProjectionStatus::converged: return "converged";
    case ProjectionStatus::iteration_limit: return "iteration_limit";
    case ProjectionStatus::subproblem_infeasible: return "subproblem_infeasible";
    case ProjectionStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

void FeasibleSetSpec::validate() const {
  if (constraints.length() != shape.length) {
    throw std::invalid_argument("feasible set: one constraint list per step index 0..H required");
  }
  if (fixed_state.size() != shape.state_dim) throw std::invalid_argument("feasible set: fixed state size");
  if (constraints.action_box.lower.size() != shape.action_dim) {
    throw std::invalid_argument("feasible set: action box size");
  }
  if (dynamics && (dynamics->state_dim() != shape.state_dim || dynamics->action_dim() != shape.action_dim)) {
    throw std::invalid_argument("feasible set: dynamics dimensions");
  }
}

// ---------------------------------------------------------------- tightening

ConstraintPrimitive tighten(const ConstraintPrimitive& primitive, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("tighten: gamma must be >= 0");
  if (const auto* h = std::get_if<Halfspace>(&primitive)) {
    return Halfspace{h->normal, h->offset - gamma * h->normal.norm()};
  }
  if (const auto* b = std::get_if<Box>(&primitive)) {
    Box out = *b;
    for (Eigen::Index i = 0; i < out.lower.size(); ++i) {
      if (std::isfinite(out.lower[i])) out.lower[i] += gamma;
      if (std::isfinite(out.upper[i])) out.upper[i] -= gamma;
      if (out.lower[i] > out.upper[i]) throw EmptySetError("tighten: box erodes to the empty set");
    }
    return out;
  }
  AvoidDisk d = std::get<AvoidDisk>(primitive);
  d.radius += gamma;
  return d;
}

StageConstraintSet tighten(const StageConstraintSet& constraints, double gamma) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("tighten: gamma must be >= 0");
  StageConstraintSet out = constraints;
  for (std::size_t k = 1; k < out.state_constraints.size(); ++k) {
    for (auto& p : out.state_constraints[k]) p = tighten(p, gamma);
  }
  return out;
}

// ------------------------------------------------------------- point-level

Eigen::VectorXd project_point(const ConstraintPrimitive& primitive, const Eigen::VectorXd& x) {
  Eigen::VectorXd y = x;
  if (const auto* h = std::get_if<Halfspace>(&primitive)) {
    const double excess = h->normal.dot(x) - h->offset;
    if (excess > 0.0) y -= (excess / h->normal.squaredNorm()) * h->normal;
  } else if (const auto* b = std::get_if<Box>(&primitive)) {
    y = x.cwiseMax(b->lower).cwiseMin(b->upper);
  } else {
    const auto& d = std::get<AvoidDisk>(primitive);
    Eigen::Vector2d delta(x[d.coords[0]] - d.center[0], x[d.coords[1]] - d.center[1]);
    const double dist = delta.norm();
    if (dist < d.radius) {
      const Eigen::Vector2d dir = dist > 1e-12 ? Eigen::Vector2d(delta / dist) : Eigen::Vector2d(1.0, 0.0);
      y[d.coords[0]] = d.center[0] + d.radius * dir[0];
      y[d.coords[1]] = d.center[1] + d.radius * dir[1];
    }
  }
  return y;
}

std::vector<double> violation_report(const Eigen::VectorXd& state,
                                     const std::vector<ConstraintPrimitive>& primitives) {
  std::vector<double> out;
  out.reserve(primitives.size());
  for (const auto& p : primitives) out.push_back(violation(p, state));
  return out;
}

double max_constraint_violation(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec) {
  const auto& shape = spec.shape;
  double worst = 0.0;
  for (int k = 0; k < shape.length; ++k) {
    const Eigen::VectorXd a = tau.segment(shape.action_index(k, 0), shape.action_dim);
    worst = std::max(worst, violation(spec.constraints.action_box, a));
    if (k == 0) continue;
    const Eigen::VectorXd s = tau.segment(shape.state_index(k, 0), shape.state_dim);
    for (const auto& p : spec.constraints.state_constraints[static_cast<std::size_t>(k)]) {
      worst = std::max(worst, violation(p, s));
    }
  }
  return worst;
}

double dynamics_residual(const Eigen::VectorXd& tau, const TrajectoryShape& shape,
                         const AffineDynamics& dynamics) {
  double worst = 0.0;
  for (int k = 0; k + 1 < shape.length; ++k) {
    const Eigen::VectorXd s = tau.segment(shape.state_index(k, 0), shape.state_dim);
    const Eigen::VectorXd a = tau.segment(shape.action_index(k, 0), shape.action_dim);
    const Eigen::VectorXd next = tau.segment(shape.state_index(k + 1, 0), shape.state_dim);
    worst = std::max(worst, (next - dynamics.step(s, a)).cwiseAbs().maxCoeff());
  }
  return worst;
}

// ------------------------------------------------------------- model-free

ProjectionResult project_model_free(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec) {
  spec.validate();
  const auto& shape = spec.shape;
  if (tau.size() != shape.flat_size()) throw std::invalid_argument("projection: trajectory size");
  constexpr int kSweeps = 100;
  constexpr double kTol = 1e-12;

  ProjectionResult res;
  res.projected = tau;
  res.projected.segment(shape.state_index(0, 0), shape.state_dim) = spec.fixed_state;
  for (int k = 0; k < shape.length; ++k) {
    auto a = res.projected.segment(shape.action_index(k, 0), shape.action_dim);
    a = project_point(spec.constraints.action_box, a);
    if (k == 0) continue;
    const auto& prims = spec.constraints.state_constraints[static_cast<std::size_t>(k)];
    Eigen::VectorXd s = res.projected.segment(shape.state_index(k, 0), shape.state_dim);
    // Cyclic projections onto the stage primitives until all hold.
    for (int sweep = 0; sweep < kSweeps; ++sweep) {
      double worst = 0.0;
      for (const auto& p : prims) {
        worst = std::max(worst, violation(p, s));
        s = project_point(p, s);
      }
      if (worst <= kTol) break;
    }
    res.projected.segment(shape.state_index(k, 0), shape.state_dim) = s;
  }
  res.cost = (res.projected - tau).squaredNorm();
  res.iterations = 1;
  res.max_violation = max_constraint_violation(res.projected, spec);
  res.converged = res.max_violation <= 1e-6;
  res.status = res.converged ? ProjectionStatus::converged : ProjectionStatus::iteration_limit;
  return res;
}

// ------------------------------------------------------------- model-based

namespace {

struct DiskTerm {
  int stage;
  AvoidDisk disk;
};

// Actions are the unknowns; state k is S[k] a + e[k].
class ReducedProblem {
 public:
  ReducedProblem(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec) : spec_(spec), tau_(tau) {
    const auto& shape = spec.shape;
    const auto& f = *spec.dynamics;
    const int L = shape.length;
    const int ds = shape.state_dim;
    const int da = shape.action_dim;
    na_ = L * da;

    S_.assign(L, Eigen::MatrixXd::Zero(ds, na_));
    e_.assign(L, Eigen::VectorXd::Zero(ds));
    e_[0] = spec.fixed_state;
    for (int k = 0; k + 1 < L; ++k) {
      S_[k + 1] = f.A * S_[k];
      S_[k + 1].middleCols(k * da, da) += f.B;
      e_[k + 1] = f.A * e_[k] + f.c;
    }

    input_actions_.resize(na_);
    for (int k = 0; k < L; ++k) {
      input_actions_.segment(k * da, da) = tau.segment(shape.action_index(k, 0), da);
    }

    G_ = Eigen::MatrixXd::Identity(na_, na_);
    g_ = -input_actions_;
    for (int k = 1; k < L; ++k) {
      const Eigen::VectorXd target = tau.segment(shape.state_index(k, 0), ds);
      G_.noalias() += S_[k].transpose() * S_[k];
      g_.noalias() += S_[k].transpose() * (e_[k] - target);
    }
    G_ *= 2.0;
    g_ *= 2.0;

    build_linear_rows();
    for (int k = 1; k < L; ++k) {
      for (const auto& p : spec.constraints.state_constraints[static_cast<std::size_t>(k)]) {
        if (const auto* d = std::get_if<AvoidDisk>(&p)) disks_.push_back({k, *d});
      }
    }
  }

  bool has_disks() const { return !disks_.empty(); }
  const Eigen::VectorXd& input_actions() const { return input_actions_; }

  // Sufficient emptiness test: some primitive at step k excludes every state
  // reachable from the pinned state with actions inside the action box. The
  // reachable set is the box image under S[k]; halfspaces and box faces are
  // checked by their support function, disks by enumerating the image's
  // corners (the image is convex, so corners inside the disk imply all of it).
  bool reachable_set_excluded(double tol) const {
    const auto& shape = spec_.shape;
    const int da = shape.action_dim;
    const Box& abox = spec_.constraints.action_box;
    if (!abox.lower.allFinite() || !abox.upper.allFinite()) return false;
    constexpr int kMaxCornerBits = 8;
    for (int k = 1; k < shape.length; ++k) {
      const auto& S = S_[static_cast<std::size_t>(k)];
      const auto& e = e_[static_cast<std::size_t>(k)];
      const int free = k * da;  // actions 0..k-1 move state k
      // Smallest value of row . s over the reachable set.
      auto min_over = [&](const Eigen::VectorXd& row) {
        const Eigen::VectorXd g = S.leftCols(free).transpose() * row;
        double v = row.dot(e);
        for (int i = 0; i < free; ++i) {
          v += std::min(g[i] * abox.lower[i % da], g[i] * abox.upper[i % da]);
        }
        return v;
      };
      for (const auto& p : spec_.constraints.state_constraints[static_cast<std::size_t>(k)]) {
        if (const auto* h = std::get_if<Halfspace>(&p)) {
          if (min_over(h->normal) > h->offset + tol) return true;
        } else if (const auto* bx = std::get_if<Box>(&p)) {
          for (Eigen::Index i = 0; i < bx->lower.size(); ++i) {
            Eigen::VectorXd unit = Eigen::VectorXd::Zero(shape.state_dim);
            unit[i] = 1.0;
            if (min_over(unit) > bx->upper[i] + tol || -min_over(-unit) < bx->lower[i] - tol) return true;
          }
        } else if (free <= kMaxCornerBits) {
          const auto& d = std::get<AvoidDisk>(p);
          bool all_inside = true;
          Eigen::VectorXd a(free);
          for (int mask = 0; mask < (1 << free) && all_inside; ++mask) {
            for (int i = 0; i < free; ++i) a[i] = (mask >> i) & 1 ? abox.upper[i % da] : abox.lower[i % da];
            const Eigen::VectorXd s = S.leftCols(free) * a + e;
            const Eigen::Vector2d delta(s[d.coords[0]] - d.center[0], s[d.coords[1]] - d.center[1]);
            all_inside = delta.norm() < d.radius - tol;
          }
          if (all_inside) return true;
        }
      }
    }
    return false;
  }

  Eigen::VectorXd reconstruct(const Eigen::VectorXd& a) const {
    const auto& shape = spec_.shape;
    Eigen::VectorXd flat(shape.flat_size());
    for (int k = 0; k < shape.length; ++k) {
      flat.segment(shape.state_index(k, 0), shape.state_dim) = S_[k] * a + e_[k];
      flat.segment(shape.action_index(k, 0), shape.action_dim) =
          a.segment(k * shape.action_dim, shape.action_dim);
    }
    return flat;
  }

  // Disk rows linearized at the states of `flat`: the supporting halfspace of
  // each disk at the radial direction of the current point. In elastic mode
  // every state row gets a nonnegative slack penalized quadratically, so the
  // subproblem stays solvable and returns the least-violating trajectory;
  // the action box stays hard.
  QpResult solve(const Eigen::VectorXd& flat_linearization, double qp_tol, bool elastic = false) const {
    const auto& shape = spec_.shape;
    const Eigen::Index rows = A_lin_.rows() + static_cast<Eigen::Index>(disks_.size());
    Eigen::MatrixXd A(rows, na_);
    Eigen::VectorXd b(rows);
    A.topRows(A_lin_.rows()) = A_lin_;
    b.head(b_lin_.size()) = b_lin_;
    Eigen::Index r = A_lin_.rows();
    for (const auto& term : disks_) {
      const auto& d = term.disk;
      const int i = d.coords[0];
      const int j = d.coords[1];
      const Eigen::Index si = shape.state_index(term.stage, 0);
      Eigen::Vector2d delta(flat_linearization[si + i] - d.center[0], flat_linearization[si + j] - d.center[1]);
      if (delta.norm() < 1e-9) delta = Eigen::Vector2d(1.0, 0.0);
      const Eigen::Vector2d n = delta.normalized();
      const auto& S = S_[static_cast<std::size_t>(term.stage)];
      const auto& e = e_[static_cast<std::size_t>(term.stage)];
      // n . (P s - p) >= radius  <=>  -n . P S a <= -(radius + n . p) + n . P e
      A.row(r) = -(n[0] * S.row(i) + n[1] * S.row(j));
      b[r] = -(d.radius + n.dot(d.center)) + n[0] * e[i] + n[1] * e[j];
      ++r;
    }
    if (!elastic) return solve_qp(G_, g_, A, b, qp_tol);

    constexpr double kSlackWeight = 1e4;
    std::vector<Eigen::Index> soft;
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (i >= A_lin_.rows() || !hard_[static_cast<std::size_t>(i)]) soft.push_back(i);
    }
    const auto ns = static_cast<Eigen::Index>(soft.size());
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(na_ + ns, na_ + ns);
    G.topLeftCorner(na_, na_) = G_;
    G.bottomRightCorner(ns, ns).diagonal().setConstant(2.0 * kSlackWeight);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(na_ + ns);
    g.head(na_) = g_;
    Eigen::MatrixXd Ae = Eigen::MatrixXd::Zero(rows + ns, na_ + ns);
    Eigen::VectorXd be = Eigen::VectorXd::Zero(rows + ns);
    Ae.topLeftCorner(rows, na_) = A;
    be.head(rows) = b;
    for (Eigen::Index j = 0; j < ns; ++j) {
      Ae(soft[static_cast<std::size_t>(j)], na_ + j) = -1.0;
      Ae(rows + j, na_ + j) = -1.0;
    }
    QpResult res = solve_qp(G, g, Ae, be, qp_tol);
    res.x.conservativeResize(na_);
    return res;
  }

 private:
  void build_linear_rows() {
    const auto& shape = spec_.shape;
    const int da = shape.action_dim;
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    auto add = [&](Eigen::VectorXd row, double value, bool hard = false) {
      rows.push_back(std::move(row));
      rhs.push_back(value);
      hard_.push_back(hard ? 1 : 0);
    };
    const Box& abox = spec_.constraints.action_box;
    for (int k = 0; k < shape.length; ++k) {
      for (int j = 0; j < da; ++j) {
        Eigen::VectorXd unit = Eigen::VectorXd::Zero(na_);
        unit[k * da + j] = 1.0;
        if (std::isfinite(abox.upper[j])) add(unit, abox.upper[j], true);
        if (std::isfinite(abox.lower[j])) add(-unit, -abox.lower[j], true);
      }
      if (k == 0) continue;
      const auto& S = S_[static_cast<std::size_t>(k)];
      const auto& e = e_[static_cast<std::size_t>(k)];
      for (const auto& p : spec_.constraints.state_constraints[static_cast<std::size_t>(k)]) {
        if (const auto* h = std::get_if<Halfspace>(&p)) {
          add(S.transpose() * h->normal, h->offset - h->normal.dot(e));
        } else if (const auto* bx = std::get_if<Box>(&p)) {
          for (Eigen::Index i = 0; i < bx->lower.size(); ++i) {
            if (std::isfinite(bx->upper[i])) add(S.row(i).transpose(), bx->upper[i] - e[i]);
            if (std::isfinite(bx->lower[i])) add(-S.row(i).transpose(), e[i] - bx->lower[i]);
          }
        }
      }
    }
    A_lin_.resize(static_cast<Eigen::Index>(rows.size()), na_);
    b_lin_.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      A_lin_.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
      b_lin_[static_cast<Eigen::Index>(r)] = rhs[r];
    }
  }

  const FeasibleSetSpec& spec_;
  const Eigen::VectorXd& tau_;
  int na_ = 0;
  std::vector<Eigen::MatrixXd> S_;
  std::vector<Eigen::VectorXd> e_;
  Eigen::VectorXd input_actions_;
  Eigen::MatrixXd G_;
  Eigen::VectorXd g_;
  Eigen::MatrixXd A_lin_;
  Eigen::VectorXd b_lin_;
  std::vector<char> hard_;
  std::vector<DiskTerm> disks_;
};

}  // namespace

ProjectionResult project_model_based(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec,
                                     const ProjectionSettings& settings) {
  spec.validate();
  if (!spec.use_dynamics()) throw std::invalid_argument("project_model_based: spec has no dynamics");
  if (tau.size() != spec.shape.flat_size()) throw std::invalid_argument("projection: trajectory size");
  if (!tau.allFinite()) throw NumericError("projection: non-finite input trajectory");

  const ReducedProblem problem(tau, spec);
  const double tol = settings.feasibility_tol;

  Eigen::VectorXd a = problem.input_actions();
  Eigen::VectorXd flat = problem.reconstruct(a);
  double viol = max_constraint_violation(flat, spec);

  ProjectionResult best;
  bool have_best = false;
  auto consider = [&](const Eigen::VectorXd& candidate, double v) {
    const double cost = (candidate - tau).squaredNorm();
    const bool feasible = v <= tol;
    const bool best_feasible = have_best && best.max_violation <= tol;
    bool take = !have_best;
    if (have_best) {
      if (feasible && !best_feasible) take = true;
      else if (feasible && best_feasible) take = cost < best.cost;
      else if (!feasible && !best_feasible) take = v < best.max_violation;
    }
    if (take) {
      best.projected = candidate;
      best.cost = cost;
      best.max_violation = v;
      have_best = true;
    }
  };

  // The first linearization uses the input's own states: they carry the
  // sampled intent of which side of each disk to pass.
  Eigen::VectorXd linearize_at = tau;
  linearize_at.segment(spec.shape.state_index(0, 0), spec.shape.state_dim) = spec.fixed_state;

  ProjectionStatus status = ProjectionStatus::iteration_limit;
  bool proven_empty = false;
  int it = 0;
  while (it < settings.max_iterations) {
    ++it;
    QpResult qp = problem.solve(linearize_at, settings.qp_tol);
    if (qp.status != QpStatus::optimal && it == 1 && problem.has_disks()) {
      qp = problem.solve(flat, settings.qp_tol);
    }
    bool elastic = false;
    if (qp.status != QpStatus::optimal) {
      // Without disks the subproblem is the whole problem, so its
      // infeasibility proves the set empty.
      if (qp.status == QpStatus::infeasible && !problem.has_disks()) proven_empty = true;
      qp = problem.solve(linearize_at, settings.qp_tol, true);
      elastic = true;
      if (qp.status != QpStatus::optimal) {
        status = proven_empty ? ProjectionStatus::infeasible : ProjectionStatus::subproblem_infeasible;
        break;
      }
    }

    Eigen::VectorXd a_next = qp.x;
    Eigen::VectorXd flat_next = problem.reconstruct(a_next);
    double viol_next = max_constraint_violation(flat_next, spec);
    const double allowed = std::max(viol, tol);
    if (viol_next > allowed) {
      const Eigen::VectorXd step = a_next - a;
      double scale = 1.0;
      for (int h = 0; h < settings.max_damping_halvings; ++h) {
        scale *= settings.damping;
        const Eigen::VectorXd a_try = a + scale * step;
        const Eigen::VectorXd flat_try = problem.reconstruct(a_try);
        const double viol_try = max_constraint_violation(flat_try, spec);
        if (viol_try <= allowed) {
          a_next = a_try;
          flat_next = flat_try;
          viol_next = viol_try;
          break;
        }
      }
    }

    const double step_norm = (a_next - a).cwiseAbs().maxCoeff();
    a = std::move(a_next);
    flat = std::move(flat_next);
    viol = viol_next;
    consider(flat, viol);

    if (viol <= tol && (step_norm <= settings.step_tol || !problem.has_disks())) {
      status = ProjectionStatus::converged;
      break;
    }
    if (elastic && (step_norm <= settings.step_tol || !problem.has_disks())) {
      // Stationary least-violation point: no feasible iterate is reachable.
      status = proven_empty ? ProjectionStatus::infeasible : ProjectionStatus::subproblem_infeasible;
      break;
    }
    linearize_at = flat;
  }

  if (!have_best) consider(flat, viol);
  if (status != ProjectionStatus::converged && !proven_empty && problem.reachable_set_excluded(tol)) {
    status = ProjectionStatus::infeasible;
  }
  best.iterations = it;
  best.status = status;
  if (status == ProjectionStatus::converged) {
    // The converged iterate is the returned KKT point unless an earlier
    // feasible iterate was cheaper.
    if (!(best.max_violation <= tol && best.cost < (flat - tau).squaredNorm())) {
      best.projected = flat;
      best.cost = (flat - tau).squaredNorm();
      best.max_violation = viol;
    }
  }
  best.converged = status == ProjectionStatus::converged && best.max_violation <= tol;
  return best;
}

ProjectionResult project_model_based(const Trajectory& tau, const FeasibleSetSpec& spec,
                                     const ProjectionSettings& settings) {
  return project_model_based(tau.flatten(), spec, settings);
}

ProjectionResult project(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec,
                         const ProjectionSettings& settings) {
  return spec.use_dynamics() ? project_model_based(tau, spec, settings) : project_model_free(tau, spec);
}

double projection_cost(const Eigen::VectorXd& tau, const FeasibleSetSpec& spec,
                       const ProjectionSettings& settings) {
  const ProjectionResult r = project(tau, spec, settings);
  if (r.status == ProjectionStatus::infeasible) {
    throw InfeasibleProjection("projection_cost: feasible set is empty");
  }
  return r.cost;
}

}  // namespace dpcc
