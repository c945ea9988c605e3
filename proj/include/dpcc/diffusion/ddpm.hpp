#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "dpcc/core/random.hpp"
#include "dpcc/core/schedule.hpp"
#include "dpcc/core/trajectory.hpp"
#include "dpcc/diffusion/denoiser.hpp"

namespace dpcc {

/// Learned backward-process mean from a noise prediction:
/// mu = (tau_k - beta_k / sqrt(1 - alpha_bar_k) eps_hat) / sqrt(alpha_k).
Eigen::VectorXd posterior_mean(const Eigen::VectorXd& tau_k, int k, const Eigen::VectorXd& eps_hat,
                               const NoiseSchedule& schedule);

/// Noise implied by a mean: (sqrt(1 - alpha_bar_k)/beta_k)(tau_k - sqrt(alpha_k) mu).
Eigen::VectorXd noise_from_mean(const Eigen::VectorXd& tau_k, int k, const Eigen::VectorXd& mu,
                                const NoiseSchedule& schedule);

/// Overwrites the first-state slot with `state`; every other entry is untouched.
void inpaint_condition(Eigen::Ref<Eigen::VectorXd> flat, const TrajectoryShape& shape,
                       const Eigen::VectorXd& state);
Trajectory inpaint_condition(Trajectory tau, const Eigen::VectorXd& state);

struct LossAndGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Mean over the batch of ||eps - eps_theta(sqrt(ab_k) tau0 + sqrt(1-ab_k) eps, k)||^2
/// with explicit steps and noise; columns are samples.
LossAndGrad noise_prediction_loss(const DenoiserNet& net, const Eigen::MatrixXd& tau0,
                                  std::span<const int> steps, const Eigen::MatrixXd& eps,
                                  const NoiseSchedule& schedule, bool want_grad = true);

/// Same loss with k ~ Uniform{1..K} and eps ~ N(0, I) drawn from `rng`.
LossAndGrad training_loss(const DenoiserNet& net, const Eigen::MatrixXd& tau0,
                          const NoiseSchedule& schedule, Rng& rng);

/// Hooks into the batched backward process. Column j of the matrix is chain j.
struct DenoiseHooks {
  /// Modifies the learned mean of one chain before noise is added (guidance).
  std::function<void(int k, int chain, Eigen::VectorXd& mean)> adjust_mean;
  /// Runs on each chain after noise and inpainting, yielding tau^{k-1} (projection).
  std::function<void(int k, int chain, Eigen::VectorXd& tau)> after_step;
};

/// Batched backward process from tau^K ~ N(0, I). Each chain owns a child
/// stream split from `rng`; every variant consumes the streams identically,
/// so with no-op hooks the result matches `sample_unconstrained`.
Eigen::MatrixXd run_backward_process(const DenoiserNet& net, const NoiseSchedule& schedule,
                                     const TrajectoryShape& shape, const Eigen::VectorXd& state,
                                     int batch, Rng& rng, const DenoiseHooks& hooks = {});

/// B trajectories from the learned distribution with the current state inpainted.
std::vector<Trajectory> sample_unconstrained(const DenoiserNet& net, const NoiseSchedule& schedule,
                                             const TrajectoryShape& shape,
                                             const Eigen::VectorXd& state, int batch, Rng& rng);

}  // namespace dpcc
