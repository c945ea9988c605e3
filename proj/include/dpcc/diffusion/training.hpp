#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dpcc/core/normalizer.hpp"
#include "dpcc/core/schedule.hpp"
#include "dpcc/core/trajectory.hpp"
#include "dpcc/diffusion/denoiser.hpp"

namespace dpcc {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int steps = 20000;  // binding budget
  int epochs = 100;   // logging unit: validation runs every steps/epochs steps
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double validation_fraction = 0.1;
  int warmup_steps = 1000;
  std::string lr_schedule = "cosine";  // "cosine" or "constant"
  int validation_samples = 512;
  std::uint64_t seed = 0;
  int embed_dim = 32;
  std::vector<int> hidden = {256, 256, 256};

  /// Throws std::invalid_argument on non-positive sizes or a fraction outside (0,1).
  void validate() const;
  double learning_rate_at(int step) const;
};

class AdamOptimizer {
 public:
  AdamOptimizer(Eigen::Index size, double beta1, double beta2, double eps);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);
  long iterations() const { return t_; }

 private:
  Eigen::VectorXd m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainRecord {
  int step = 0;
  int epoch = 0;
  double train_loss = 0.0;       // running mean since the previous record
  double validation_loss = 0.0;
};

/// Everything needed to sample: weights, schedule, normalization and provenance.
struct Checkpoint {
  TrajectoryShape shape;
  DenoiserNet net;
  NoiseSchedule schedule;
  Normalizer normalizer;
  TrainConfig config;
  double initial_validation_loss = 0.0;
  double best_validation_loss = 0.0;
  int best_step = 0;
  std::vector<TrainRecord> history;
};

using TrainProgress = std::function<void(const TrainRecord&)>;

/// Whole-trajectory split: indices ordered by a fixed hash of the index, the
/// first ceil(fraction * n) go to validation.
struct DemoSplit {
  std::vector<int> train;
  std::vector<int> validation;
};
DemoSplit split_by_trajectory(int count, double validation_fraction);

/// Every length-`length` window of the selected trajectories, one flat column each.
Eigen::MatrixXd extract_windows(const std::vector<Trajectory>& trajectories,
                                std::span<const int> indices, int length);

/// Adam on the noise-prediction loss over flat windows (columns). Returns the
/// parameters with the lowest validation loss seen. Throws TrainingFailure on
/// a non-finite loss.
Checkpoint train_on_windows(const Eigen::MatrixXd& train_windows,
                            const Eigen::MatrixXd& validation_windows, const TrajectoryShape& shape,
                            const Normalizer& normalizer, const TrainConfig& config,
                            const NoiseSchedule& schedule, const TrainProgress& progress = {});

/// Fits the normalizer on raw demonstrations, splits 90/10 by trajectory and trains.
/// Requires at least 10 demonstrations.
Checkpoint train(const std::vector<Trajectory>& raw_demos, int horizon_length,
                 const TrainConfig& config, const NoiseSchedule& schedule,
                 const std::vector<std::vector<int>>& shared_state_groups = {},
                 const TrainProgress& progress = {});

}  // namespace dpcc
