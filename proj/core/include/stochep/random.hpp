#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace stochep {

using Rng = std::mt19937_64;

/// Keyed random stream. The stream depends only on (seed, stream, epoch), so
/// per-site chains are reproducible no matter how sites are scheduled.
Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t epoch = 0);

/// Mixes several integers into a single 64-bit seed (splitmix64 finaliser).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

double standard_normal(Rng& rng);
Eigen::VectorXd standard_normal_vector(Rng& rng, Eigen::Index n);
double uniform01(Rng& rng);

}  // namespace stochep
