#include "dpcc/diffusion/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dpcc/core/errors.hpp"
#include "dpcc/core/random.hpp"
#include "dpcc/diffusion/ddpm.hpp"

namespace dpcc {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be positive");
  if (batch_size < 1 || steps < 1 || epochs < 1) {
    throw std::invalid_argument("train config: batch size, steps and epochs must be positive");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("train config: validation fraction must lie in (0,1)");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0)) {
    throw std::invalid_argument("train config: invalid Adam moments");
  }
  if (warmup_steps < 0 || validation_samples < 1) {
    throw std::invalid_argument("train config: invalid warmup or validation sample count");
  }
  if (lr_schedule != "cosine" && lr_schedule != "constant") {
    throw std::invalid_argument("train config: unknown lr schedule '" + lr_schedule + "'");
  }
}

double TrainConfig::learning_rate_at(int step) const {
  if (step < warmup_steps) return learning_rate * (step + 1) / static_cast<double>(warmup_steps);
  if (lr_schedule == "constant") return learning_rate;
  const double progress =
      static_cast<double>(step - warmup_steps) / std::max(1, steps - warmup_steps);
  return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
}

AdamOptimizer::AdamOptimizer(Eigen::Index size, double beta1, double beta2, double eps)
    : m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

DemoSplit split_by_trajectory(int count, double validation_fraction) {
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [](int a, int b) {
    return mix_seed({0x5eedull, static_cast<std::uint64_t>(a)}) <
           mix_seed({0x5eedull, static_cast<std::uint64_t>(b)});
  });
  const int n_val = std::clamp(static_cast<int>(std::ceil(validation_fraction * count)), 1, count - 1);
  DemoSplit split;
  split.validation.assign(order.begin(), order.begin() + n_val);
  split.train.assign(order.begin() + n_val, order.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

Eigen::MatrixXd extract_windows(const std::vector<Trajectory>& trajectories,
                                std::span<const int> indices, int length) {
  std::vector<Eigen::VectorXd> cols;
  for (int idx : indices) {
    const Trajectory& tau = trajectories.at(idx);
    for (int start = 0; start + length <= tau.length(); ++start) {
      cols.push_back(tau.window(start, length).flatten());
    }
  }
  if (cols.empty()) return {};
  Eigen::MatrixXd out(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = cols[j];
  return out;
}

namespace {

// Fixed (window, step, noise) triples so validation losses are comparable across evaluations.
struct ValidationSet {
  Eigen::MatrixXd tau0;
  std::vector<int> steps;
  Eigen::MatrixXd eps;
};

ValidationSet make_validation_set(const Eigen::MatrixXd& windows, int samples,
                                  const NoiseSchedule& schedule, std::uint64_t seed) {
  Rng rng(mix_seed({seed, 0xa11dull}));
  std::uniform_int_distribution<Eigen::Index> pick(0, windows.cols() - 1);
  std::uniform_int_distribution<int> step_dist(1, schedule.steps());
  ValidationSet v;
  v.tau0.resize(windows.rows(), samples);
  v.eps.resize(windows.rows(), samples);
  v.steps.resize(samples);
  for (int j = 0; j < samples; ++j) {
    v.tau0.col(j) = windows.col(pick(rng));
    v.steps[j] = step_dist(rng);
    v.eps.col(j) = standard_normal(windows.rows(), rng);
  }
  return v;
}

double validation_loss(const DenoiserNet& net, const ValidationSet& v, const NoiseSchedule& schedule) {
  constexpr Eigen::Index kChunk = 64;
  double total = 0.0;
  const Eigen::Index n = v.tau0.cols();
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const auto out = noise_prediction_loss(
        net, v.tau0.middleCols(start, len),
        std::span<const int>(v.steps.data() + start, static_cast<std::size_t>(len)),
        v.eps.middleCols(start, len), schedule, false);
    total += out.loss * static_cast<double>(len);
  }
  return total / static_cast<double>(n);
}

}  // namespace

Checkpoint train_on_windows(const Eigen::MatrixXd& train_windows,
                            const Eigen::MatrixXd& validation_windows, const TrajectoryShape& shape,
                            const Normalizer& normalizer, const TrainConfig& config,
                            const NoiseSchedule& schedule, const TrainProgress& progress) {
  config.validate();
  if (train_windows.cols() == 0 || validation_windows.cols() == 0) {
    throw TrainingFailure("training: empty training or validation window set");
  }
  if (train_windows.rows() != shape.flat_size() || validation_windows.rows() != shape.flat_size()) {
    throw std::invalid_argument("training: window size does not match trajectory shape");
  }

  DenoiserArch arch{shape.flat_size(), config.embed_dim, config.hidden};
  Checkpoint ckpt;
  ckpt.shape = shape;
  ckpt.net = DenoiserNet(arch, mix_seed({config.seed, 1}));
  ckpt.schedule = schedule;
  ckpt.normalizer = normalizer;
  ckpt.config = config;

  const ValidationSet val = make_validation_set(validation_windows, config.validation_samples, schedule, config.seed);
  AdamOptimizer adam(ckpt.net.param_count(), config.adam_beta1, config.adam_beta2, config.adam_eps);
  Rng rng(mix_seed({config.seed, 2}));
  std::uniform_int_distribution<Eigen::Index> pick(0, train_windows.cols() - 1);

  const int eval_interval = std::max(1, config.steps / config.epochs);
  ckpt.initial_validation_loss = validation_loss(ckpt.net, val, schedule);
  ckpt.best_validation_loss = ckpt.initial_validation_loss;
  ckpt.best_step = 0;
  Eigen::VectorXd best_params = ckpt.net.params();
  const TrainRecord initial{0, 0, std::nan(""), ckpt.initial_validation_loss};
  ckpt.history.push_back(initial);
  if (progress) progress(initial);

  Eigen::MatrixXd batch(shape.flat_size(), config.batch_size);
  double running = 0.0;
  int running_count = 0;
  for (int step = 0; step < config.steps; ++step) {
    for (int j = 0; j < config.batch_size; ++j) batch.col(j) = train_windows.col(pick(rng));
    const LossAndGrad lg = training_loss(ckpt.net, batch, schedule, rng);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << ": loss=" << lg.loss
          << " lr=" << config.learning_rate_at(step) << " last_validation="
          << ckpt.history.back().validation_loss;
      throw TrainingFailure(msg.str());
    }
    adam.step(ckpt.net.params(), lg.grad, config.learning_rate_at(step));
    running += lg.loss;
    ++running_count;

    const int done = step + 1;
    if (done % eval_interval == 0 || done == config.steps) {
      const double vl = validation_loss(ckpt.net, val, schedule);
      const TrainRecord rec{done, done / eval_interval, running / running_count, vl};
      ckpt.history.push_back(rec);
      if (progress) progress(rec);
      running = 0.0;
      running_count = 0;
      if (vl < ckpt.best_validation_loss) {
        ckpt.best_validation_loss = vl;
        ckpt.best_step = done;
        best_params = ckpt.net.params();
      }
    }
  }
  ckpt.net.params() = best_params;
  return ckpt;
}

Checkpoint train(const std::vector<Trajectory>& raw_demos, int horizon_length,
                 const TrainConfig& config, const NoiseSchedule& schedule,
                 const std::vector<std::vector<int>>& shared_state_groups,
                 const TrainProgress& progress) {
  if (raw_demos.size() < 10) throw std::invalid_argument("train: need at least 10 demonstrations");
  const Normalizer normalizer = Normalizer::fit(raw_demos, shared_state_groups);
  std::vector<Trajectory> normalized;
  normalized.reserve(raw_demos.size());
  for (const auto& d : raw_demos) normalized.push_back(normalizer.normalize(d));

  const DemoSplit split = split_by_trajectory(static_cast<int>(normalized.size()), config.validation_fraction);
  const TrajectoryShape shape{horizon_length, normalizer.state_dim(), normalizer.action_dim()};
  const Eigen::MatrixXd train_w = extract_windows(normalized, split.train, horizon_length);
  const Eigen::MatrixXd val_w = extract_windows(normalized, split.validation, horizon_length);
  return train_on_windows(train_w, val_w, shape, normalizer, config, schedule, progress);
}

}  // namespace dpcc
