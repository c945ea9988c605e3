#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dpcc {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; combines seed components into well-spread seeds.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng);

/// Independent child engines, one per chain, drawn from the parent stream.
std::vector<Rng> split_streams(Rng& parent, int count);

}  // namespace dpcc
