#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace kanerva {

using Rng = std::mt19937_64;

/// Derives an independent 64-bit seed for a named substream. Every random
/// draw in the project goes through this so one run seed fixes everything.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name);
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index);

Rng make_rng(std::uint64_t seed, std::string_view name);
Rng make_rng(std::uint64_t seed, std::string_view name, std::uint64_t index);

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace kanerva
