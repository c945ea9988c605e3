#include "dpcc/core/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dpcc {

NoiseSchedule NoiseSchedule::cosine(int steps, double offset, double max_beta) {
  if (steps < 1) throw std::invalid_argument("cosine_schedule: K must be >= 1");
  auto f = [&](int k) {
    const double c = std::cos(((static_cast<double>(k) / steps + offset) / (1.0 + offset)) *
                              std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> betas(steps);
  const double f0 = f(0);
  for (int k = 1; k <= steps; ++k) {
    const double ab_prev = f(k - 1) / f0;
    const double ab = f(k) / f0;
    betas[k - 1] = std::min(1.0 - ab / ab_prev, max_beta);
  }
  NoiseSchedule s = from_betas(std::move(betas));
  s.offset_ = offset;
  s.max_beta_ = max_beta;
  return s;
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("noise schedule: need at least one step");
  NoiseSchedule s;
  s.beta_ = std::move(betas);
  s.alpha_bar_.resize(s.beta_.size());
  s.sigma_.resize(s.beta_.size());
  double ab = 1.0;
  for (std::size_t i = 0; i < s.beta_.size(); ++i) {
    const double b = s.beta_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("noise schedule: beta_" + std::to_string(i + 1) +
                                  " outside (0,1)");
    }
    const double ab_prev = ab;
    ab *= 1.0 - b;
    s.alpha_bar_[i] = ab;
    s.sigma_[i] = std::sqrt(b * (1.0 - ab_prev) / (1.0 - ab));
  }
  return s;
}

Eigen::VectorXd forward_marginal_sample(const Eigen::VectorXd& tau0, double alpha_bar,
                                        const Eigen::VectorXd& eps) {
  if (tau0.size() != eps.size()) {
    throw std::invalid_argument("forward_marginal_sample: noise shape does not match trajectory");
  }
  return std::sqrt(alpha_bar) * tau0 + std::sqrt(1.0 - alpha_bar) * eps;
}

Eigen::VectorXd forward_marginal_sample(const Eigen::VectorXd& tau0, int k,
                                        const NoiseSchedule& schedule,
                                        const Eigen::VectorXd& eps) {
  if (k < 1 || k > schedule.steps()) {
    throw std::invalid_argument("forward_marginal_sample: step out of range");
  }
  return forward_marginal_sample(tau0, schedule.alpha_bar(k), eps);
}

}  // namespace dpcc
