#pragma once

#include <cstdint>
#include <random>

namespace aptrbm {

// Every stochastic routine draws from this engine so that a seed pins a run
// bit-for-bit on any platform (the std:: distributions are implementation
// defined, the engine is not).
using Rng = std::mt19937_64;

// Uniform double in [0, 1) built from the top 53 bits.
template <typename Engine>
inline double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Engine>
inline bool bernoulli(Engine& rng, double p) {
  return uniform01(rng) < p;
}

// Independent stream for a (seed, stream id) pair.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace aptrbm
