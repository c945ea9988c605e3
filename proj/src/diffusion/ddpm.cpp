#include "dpcc/diffusion/ddpm.hpp"

#include <cmath>
#include <stdexcept>

namespace dpcc {

namespace {

void check_step(int k, const NoiseSchedule& schedule) {
  if (k < 1 || k > schedule.steps()) throw std::invalid_argument("diffusion step out of range");
}

}  // namespace

Eigen::VectorXd posterior_mean(const Eigen::VectorXd& tau_k, int k, const Eigen::VectorXd& eps_hat,
                               const NoiseSchedule& schedule) {
  check_step(k, schedule);
  if (tau_k.size() != eps_hat.size()) throw std::invalid_argument("posterior_mean: shape mismatch");
  const double coef = schedule.beta(k) / std::sqrt(1.0 - schedule.alpha_bar(k));
  return (tau_k - coef * eps_hat) / std::sqrt(schedule.alpha(k));
}

Eigen::VectorXd noise_from_mean(const Eigen::VectorXd& tau_k, int k, const Eigen::VectorXd& mu,
                                const NoiseSchedule& schedule) {
  check_step(k, schedule);
  if (tau_k.size() != mu.size()) throw std::invalid_argument("noise_from_mean: shape mismatch");
  return std::sqrt(1.0 - schedule.alpha_bar(k)) / schedule.beta(k) *
         (tau_k - std::sqrt(schedule.alpha(k)) * mu);
}

void inpaint_condition(Eigen::Ref<Eigen::VectorXd> flat, const TrajectoryShape& shape,
                       const Eigen::VectorXd& state) {
  if (state.size() != shape.state_dim || flat.size() != shape.flat_size()) {
    throw std::invalid_argument("inpaint_condition: shape mismatch");
  }
  flat.segment(shape.state_index(0, 0), shape.state_dim) = state;
}

Trajectory inpaint_condition(Trajectory tau, const Eigen::VectorXd& state) {
  if (state.size() != tau.states.cols()) throw std::invalid_argument("inpaint_condition: shape mismatch");
  tau.states.row(0) = state.transpose();
  return tau;
}

LossAndGrad noise_prediction_loss(const DenoiserNet& net, const Eigen::MatrixXd& tau0,
                                  std::span<const int> steps, const Eigen::MatrixXd& eps,
                                  const NoiseSchedule& schedule, bool want_grad) {
  if (tau0.cols() == 0) throw std::invalid_argument("training_loss: empty batch");
  if (tau0.rows() != eps.rows() || tau0.cols() != eps.cols()) {
    throw std::invalid_argument("training_loss: noise shape mismatch");
  }
  Eigen::MatrixXd noised(tau0.rows(), tau0.cols());
  for (Eigen::Index j = 0; j < tau0.cols(); ++j) {
    check_step(steps[j], schedule);
    const double ab = schedule.alpha_bar(steps[j]);
    noised.col(j) = std::sqrt(ab) * tau0.col(j) + std::sqrt(1.0 - ab) * eps.col(j);
  }
  ForwardCache cache;
  const Eigen::MatrixXd pred = net.forward(noised, steps, cache);
  const Eigen::MatrixXd resid = pred - eps;
  const double batch = static_cast<double>(tau0.cols());
  LossAndGrad out;
  out.loss = resid.squaredNorm() / batch;
  if (want_grad) {
    out.grad = Eigen::VectorXd::Zero(net.param_count());
    net.backward(cache, (2.0 / batch) * resid, out.grad);
  }
  return out;
}

LossAndGrad training_loss(const DenoiserNet& net, const Eigen::MatrixXd& tau0,
                          const NoiseSchedule& schedule, Rng& rng) {
  std::uniform_int_distribution<int> step_dist(1, schedule.steps());
  std::vector<int> steps(tau0.cols());
  Eigen::MatrixXd eps(tau0.rows(), tau0.cols());
  for (Eigen::Index j = 0; j < tau0.cols(); ++j) {
    steps[j] = step_dist(rng);
    eps.col(j) = standard_normal(tau0.rows(), rng);
  }
  return noise_prediction_loss(net, tau0, steps, eps, schedule);
}

Eigen::MatrixXd run_backward_process(const DenoiserNet& net, const NoiseSchedule& schedule,
                                     const TrajectoryShape& shape, const Eigen::VectorXd& state,
                                     int batch, Rng& rng, const DenoiseHooks& hooks) {
  if (batch < 1) throw std::invalid_argument("sampling: batch must be >= 1");
  const int dim = shape.flat_size();
  auto streams = split_streams(rng, batch);
  Eigen::MatrixXd x(dim, batch);
  for (int j = 0; j < batch; ++j) {
    x.col(j) = standard_normal(dim, streams[j]);
    inpaint_condition(x.col(j), shape, state);
  }
  for (int k = schedule.steps(); k >= 1; --k) {
    const Eigen::MatrixXd eps_hat = net.predict(x, k);
    const double sigma = schedule.sigma(k);
    for (int j = 0; j < batch; ++j) {
      Eigen::VectorXd mean = posterior_mean(x.col(j), k, eps_hat.col(j), schedule);
      if (hooks.adjust_mean) hooks.adjust_mean(k, j, mean);
      Eigen::VectorXd next = mean + sigma * standard_normal(dim, streams[j]);
      inpaint_condition(next, shape, state);
      if (hooks.after_step) hooks.after_step(k, j, next);
      x.col(j) = next;
    }
  }
  return x;
}

std::vector<Trajectory> sample_unconstrained(const DenoiserNet& net, const NoiseSchedule& schedule,
                                             const TrajectoryShape& shape,
                                             const Eigen::VectorXd& state, int batch, Rng& rng) {
  const Eigen::MatrixXd x = run_backward_process(net, schedule, shape, state, batch, rng);
  std::vector<Trajectory> out;
  out.reserve(batch);
  for (int j = 0; j < batch; ++j) out.push_back(Trajectory::unflatten(x.col(j), shape));
  return out;
}

}  // namespace dpcc
