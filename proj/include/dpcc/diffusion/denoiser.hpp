#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace dpcc {

/// MLP noise predictor: input is the flattened noised trajectory concatenated
/// with a sinusoidal embedding of the diffusion step; output has the
/// trajectory's flat size.
struct DenoiserArch {
  int traj_dim = 48;
  int embed_dim = 32;
  std::vector<int> hidden = {256, 256, 256};

  int input_dim() const { return traj_dim + embed_dim; }
  /// Layer widths from input to output.
  std::vector<int> widths() const;
  int param_count() const;
  bool operator==(const DenoiserArch&) const = default;
};

/// Sinusoidal embedding [sin(k w_0..w_{n-1}), cos(k w_0..w_{n-1})], w_i = 10000^(-i/(n-1)).
Eigen::VectorXd timestep_embedding(int k, int dim);

/// Activations kept by the forward pass for backprop.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
  std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[l+1] = layer l output
};

/// Parameters live in one contiguous vector. Layout, for each layer in order:
/// weight matrix (out x in, row-major) followed by the bias (out).
class DenoiserNet {
 public:
  DenoiserNet() = default;
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  DenoiserNet(DenoiserArch arch, std::uint64_t seed);
  static DenoiserNet zeros(DenoiserArch arch);
  DenoiserNet(DenoiserArch arch, Eigen::VectorXd params);

  const DenoiserArch& arch() const { return arch_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& params() { return params_; }
  int param_count() const { return static_cast<int>(params_.size()); }

  /// Columns of `taus` are noised flat trajectories; `steps[j]` is the
  /// diffusion step of column j. Throws NumericError on non-finite input or output.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& taus, std::span<const int> steps) const;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& taus, int step) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& tau, int step) const;

  /// Forward pass storing activations.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& taus, std::span<const int> steps,
                          ForwardCache& cache) const;
  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const ForwardCache& cache, const Eigen::MatrixXd& d_output,
                Eigen::VectorXd& grad) const;

 private:
  Eigen::MatrixXd build_input(const Eigen::MatrixXd& taus, std::span<const int> steps) const;

  DenoiserArch arch_;
  Eigen::VectorXd params_;
};

}  // namespace dpcc
