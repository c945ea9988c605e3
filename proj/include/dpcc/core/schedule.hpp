#pragma once

#include <Eigen/Dense>
#include <vector>

namespace dpcc {

/// Per-step DDPM coefficients for steps k = 1..K.
///
/// Accessors take the 1-based diffusion step. alpha_bar(0) is defined as 1,
/// which makes sigma(1) = 0: the last denoising step is deterministic.
class NoiseSchedule {
 public:
  /// Cosine schedule: alpha_bar_k = f(k)/f(0), f(k) = cos^2(((k/K + s)/(1 + s)) pi/2),
  /// with beta_k = min(1 - alpha_bar_k/alpha_bar_{k-1}, max_beta). The stored
  /// alpha_bar is the running product of the clipped alphas.
  static NoiseSchedule cosine(int steps, double offset = 0.008, double max_beta = 0.999);

  /// Builds a schedule from explicit betas, each in (0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int k) const { return beta_.at(k - 1); }
  double alpha(int k) const { return 1.0 - beta(k); }
  double alpha_bar(int k) const { return k == 0 ? 1.0 : alpha_bar_.at(k - 1); }
  double sigma(int k) const { return sigma_.at(k - 1); }

  const std::vector<double>& betas() const { return beta_; }

  /// Cosine offset used to build the schedule, or a negative value when built from betas.
  double offset() const { return offset_; }
  double max_beta() const { return max_beta_; }

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
  double offset_ = -1.0;
  double max_beta_ = 1.0;
};

/// Closed-form forward marginal: sqrt(alpha_bar_k) tau0 + sqrt(1 - alpha_bar_k) eps.
Eigen::VectorXd forward_marginal_sample(const Eigen::VectorXd& tau0, int k,
                                        const NoiseSchedule& schedule,
                                        const Eigen::VectorXd& eps);

/// Same map with an explicit alpha_bar, used for the limiting cases.
Eigen::VectorXd forward_marginal_sample(const Eigen::VectorXd& tau0, double alpha_bar,
                                        const Eigen::VectorXd& eps);

}  // namespace dpcc
