#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace deep2bsde {

/// Independent Mersenne-Twister stream keyed by a seed and a path of stream
/// indices, e.g. stream(seed, {kBrownian, step, sample}). Distinct paths give
/// statistically independent streams, so work can be split across threads
/// without changing results.
std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// Stream tags used across the library.
namespace stream_tag {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t brownian = 2;
inline constexpr std::uint64_t monte_carlo = 3;
inline constexpr std::uint64_t training = 4;
}  // namespace stream_tag

}  // namespace deep2bsde
