#include "dpcc/projection/qp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpcc {

QpResult solve_qp(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, const Eigen::MatrixXd& A,
                  const Eigen::VectorXd& b, double feasibility_tol, int max_iterations) {
  const Eigen::Index n = G.rows();
  const Eigen::Index m = A.rows();
  if (G.cols() != n || c.size() != n || (m > 0 && A.cols() != n) || b.size() != m) {
    throw std::invalid_argument("solve_qp: dimension mismatch");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("solve_qp: G is not positive definite");
  if (max_iterations <= 0) max_iterations = static_cast<int>(50 * (n + m) + 100);

  const double inf = std::numeric_limits<double>::infinity();
  QpResult res;
  res.x = llt.solve(-c);

  // Constraint i reads N_i'x >= d_i with N_i = -A_i', d_i = -b_i; V = L^{-1} N.
  const Eigen::MatrixXd V = llt.matrixL().solve(-A.transpose());
  const Eigen::VectorXd row_norm = A.rowwise().norm().cwiseMax(1e-300);

  std::vector<int> active;
  std::vector<double> u;
  std::vector<char> is_active(static_cast<std::size_t>(m), 0);

  auto slack = [&](Eigen::Index i) { return b[i] - A.row(i).dot(res.x); };

  auto drop = [&](std::vector<double>& mult, int pos) {
    is_active[static_cast<std::size_t>(active[pos])] = 0;
    active.erase(active.begin() + pos);
    mult.erase(mult.begin() + pos);
  };

  int iter = 0;
  while (true) {
    Eigen::Index p = -1;
    double worst = -feasibility_tol;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (is_active[static_cast<std::size_t>(i)]) continue;
      const double s = slack(i) / row_norm[i];
      if (s < worst) {
        worst = s;
        p = i;
      }
    }
    if (p < 0) {
      res.status = QpStatus::optimal;
      break;
    }

    std::vector<double> uplus = u;
    double u_new = 0.0;
    bool added = false;
    while (!added) {
      if (++iter > max_iterations) {
        res.status = QpStatus::iteration_limit;
        res.active = active;
        res.multipliers = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
        res.iterations = iter;
        return res;
      }
      const auto q = static_cast<Eigen::Index>(active.size());
      const Eigen::VectorXd v = V.col(p);
      Eigen::VectorXd r(q);
      Eigen::VectorXd w = v;
      if (q > 0) {
        Eigen::MatrixXd M(n, q);
        for (Eigen::Index j = 0; j < q; ++j) M.col(j) = V.col(active[static_cast<std::size_t>(j)]);
        r = M.householderQr().solve(v);
        w = v - M * r;
      }
      const double w2 = w.squaredNorm();
      const bool has_primal = std::sqrt(w2) > 1e-12 * std::max(1.0, v.norm());

      double t1 = inf;
      int drop_pos = -1;
      for (Eigen::Index j = 0; j < q; ++j) {
        if (r[j] > 1e-14) {
          const double ratio = uplus[static_cast<std::size_t>(j)] / r[j];
          if (ratio < t1) {
            t1 = ratio;
            drop_pos = static_cast<int>(j);
          }
        }
      }
      const double t2 = has_primal ? -slack(p) / w2 : inf;

      if (!has_primal) {
        if (drop_pos < 0) {
          res.status = QpStatus::infeasible;
          res.active = active;
          res.iterations = iter;
          return res;
        }
        for (Eigen::Index j = 0; j < q; ++j) uplus[static_cast<std::size_t>(j)] -= t1 * r[j];
        u_new += t1;
        drop(uplus, drop_pos);
        continue;
      }

      const double t = std::min(t1, t2);
      res.x += t * llt.matrixU().solve(w);
      for (Eigen::Index j = 0; j < q; ++j) uplus[static_cast<std::size_t>(j)] -= t * r[j];
      u_new += t;
      if (t2 <= t1) {
        active.push_back(static_cast<int>(p));
        is_active[static_cast<std::size_t>(p)] = 1;
        uplus.push_back(u_new);
        u = std::move(uplus);
        added = true;
      } else {
        drop(uplus, drop_pos);
      }
    }
  }
  res.active = active;
  res.multipliers = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
  res.iterations = iter;
  return res;
}

}  // namespace dpcc
