#include "dpcc/diffusion/denoiser.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "dpcc/core/errors.hpp"

namespace dpcc {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// SiLU, x * sigmoid(x).
Eigen::MatrixXd activate(const Eigen::MatrixXd& z) {
  return z.array() / (1.0 + (-z.array()).exp());
}

Eigen::MatrixXd activate_grad(const Eigen::MatrixXd& z) {
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
  return (s * (1.0 + z.array() * (1.0 - s))).matrix();
}

}  // namespace

std::vector<int> DenoiserArch::widths() const {
  std::vector<int> w{input_dim()};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(traj_dim);
  return w;
}

int DenoiserArch::param_count() const {
  const auto w = widths();
  int n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l + 1] * w[l] + w[l + 1];
  return n;
}

Eigen::VectorXd timestep_embedding(int k, int dim) {
  if (dim % 2 != 0 || dim < 2) throw std::invalid_argument("timestep embedding width must be even");
  const int half = dim / 2;
  Eigen::VectorXd e(dim);
  for (int i = 0; i < half; ++i) {
    const double w = half > 1 ? std::exp(-std::log(10000.0) * i / (half - 1)) : 1.0;
    e[i] = std::sin(k * w);
    e[half + i] = std::cos(k * w);
  }
  return e;
}

DenoiserNet::DenoiserNet(DenoiserArch arch, std::uint64_t seed)
    : arch_(std::move(arch)), params_(arch_.param_count()) {
  std::mt19937_64 rng(seed);
  const auto w = arch_.widths();
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const Eigen::Index n = static_cast<Eigen::Index>(w[l + 1]) * (w[l] + 1);
    for (Eigen::Index i = 0; i < n; ++i) params_[offset + i] = u(rng);
    offset += n;
  }
}

DenoiserNet DenoiserNet::zeros(DenoiserArch arch) {
  const int n = arch.param_count();
  return DenoiserNet(std::move(arch), Eigen::VectorXd::Zero(n));
}

DenoiserNet::DenoiserNet(DenoiserArch arch, Eigen::VectorXd params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  if (params_.size() != arch_.param_count()) {
    throw std::invalid_argument("denoiser: expected " + std::to_string(arch_.param_count()) +
                                " parameters, got " + std::to_string(params_.size()));
  }
}

Eigen::MatrixXd DenoiserNet::build_input(const Eigen::MatrixXd& taus,
                                         std::span<const int> steps) const {
  if (taus.rows() != arch_.traj_dim) throw std::invalid_argument("denoiser: wrong trajectory size");
  if (static_cast<Eigen::Index>(steps.size()) != taus.cols()) {
    throw std::invalid_argument("denoiser: one diffusion step per column required");
  }
  if (!taus.allFinite()) throw NumericError("denoiser: non-finite input trajectory");
  Eigen::MatrixXd x(arch_.input_dim(), taus.cols());
  x.topRows(arch_.traj_dim) = taus;
  for (Eigen::Index j = 0; j < taus.cols(); ++j) {
    x.col(j).tail(arch_.embed_dim) = timestep_embedding(steps[j], arch_.embed_dim);
  }
  return x;
}

Eigen::MatrixXd DenoiserNet::forward(const Eigen::MatrixXd& taus, std::span<const int> steps,
                                     ForwardCache& cache) const {
  const auto w = arch_.widths();
  const std::size_t layers = w.size() - 1;
  cache.pre.assign(layers, {});
  cache.post.assign(layers + 1, {});
  cache.post[0] = build_input(taus, steps);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    RowMajorMap W(params_.data() + offset, w[l + 1], w[l]);
    offset += static_cast<Eigen::Index>(w[l + 1]) * w[l];
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + offset, w[l + 1]);
    offset += w[l + 1];
    cache.pre[l].noalias() = W * cache.post[l];
    cache.pre[l].colwise() += b;
    cache.post[l + 1] = (l + 1 == layers) ? cache.pre[l] : activate(cache.pre[l]);
  }
  if (!cache.post[layers].allFinite()) throw NumericError("denoiser: non-finite output");
  return cache.post[layers];
}

void DenoiserNet::backward(const ForwardCache& cache, const Eigen::MatrixXd& d_output,
                           Eigen::VectorXd& grad) const {
  const auto w = arch_.widths();
  const std::size_t layers = w.size() - 1;
  if (grad.size() != params_.size()) grad = Eigen::VectorXd::Zero(params_.size());

  std::vector<Eigen::Index> offsets(layers);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = offset;
    offset += static_cast<Eigen::Index>(w[l + 1]) * (w[l] + 1);
  }

  Eigen::MatrixXd dz = d_output;
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::Index wo = offsets[l];
    const Eigen::Index bo = wo + static_cast<Eigen::Index>(w[l + 1]) * w[l];
    RowMajorMutMap dW(grad.data() + wo, w[l + 1], w[l]);
    dW.noalias() += dz * cache.post[l].transpose();
    grad.segment(bo, w[l + 1]) += dz.rowwise().sum();
    if (l == 0) break;
    RowMajorMap W(params_.data() + wo, w[l + 1], w[l]);
    Eigen::MatrixXd da = W.transpose() * dz;
    dz = da.cwiseProduct(activate_grad(cache.pre[l - 1]));
  }
}

Eigen::MatrixXd DenoiserNet::predict(const Eigen::MatrixXd& taus, std::span<const int> steps) const {
  ForwardCache cache;
  return forward(taus, steps, cache);
}

Eigen::MatrixXd DenoiserNet::predict(const Eigen::MatrixXd& taus, int step) const {
  const std::vector<int> steps(taus.cols(), step);
  return predict(taus, steps);
}

Eigen::VectorXd DenoiserNet::predict(const Eigen::VectorXd& tau, int step) const {
  const int steps[1] = {step};
  return predict(Eigen::MatrixXd(tau), std::span<const int>(steps, 1)).col(0);
}

}  // namespace dpcc
