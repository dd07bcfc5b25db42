#pragma once

// Online synthetic dataset: a mixture of noisy copies of random binary
// prototype images.

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aptrbm/random.hpp"
#include "aptrbm/rbm.hpp"

namespace aptrbm {

struct MixtureSpec {
  std::vector<Vector> prototypes;
  std::vector<double> weights;
  std::vector<double> flip_probs;
  int image_side = 28;
  std::uint64_t seed = 0;

  Eigen::Index num_pixels() const { return prototypes.empty() ? 0 : prototypes.front().size(); }

  void validate() const {
    const std::size_t m = prototypes.size();
    if (m == 0 || weights.size() != m || flip_probs.size() != m)
      throw std::invalid_argument("MixtureSpec: component arrays disagree in length");
    for (const auto& y : prototypes) {
      if (y.size() != num_pixels()) throw DimensionError("MixtureSpec: prototype lengths differ");
      for (Eigen::Index j = 0; j < y.size(); ++j) {
        if (y[j] != 0.0 && y[j] != 1.0) throw std::invalid_argument("MixtureSpec: non-binary prototype");
      }
    }
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::invalid_argument("MixtureSpec: negative mixing weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("MixtureSpec: weights must sum to 1");
    for (double p : flip_probs) {
      if (!(p >= 0.0 && p <= 0.5)) throw std::invalid_argument("MixtureSpec: flip prob outside [0, 0.5]");
    }
  }
};

inline constexpr std::array<double, 5> kStandardWeights{0.3314, 0.2262, 0.0812, 0.0254, 0.3358};
inline constexpr std::array<double, 5> kStandardFlipProbs{0.0001, 0.0137, 0.0215, 0.0223, 0.0544};

// Fixed mixing weights and flip probabilities with Bernoulli(1/2)
// prototype images of side x side pixels.
template <typename Engine>
inline MixtureSpec standard_spec(Engine& rng, int image_side = 28) {
  if (image_side <= 0) throw std::invalid_argument("standard_spec: image_side must be positive");
  MixtureSpec spec;
  spec.image_side = image_side;
  const Eigen::Index n = static_cast<Eigen::Index>(image_side) * image_side;
  for (std::size_t m = 0; m < kStandardWeights.size(); ++m) {
    Vector y(n);
    for (Eigen::Index j = 0; j < n; ++j) y[j] = bernoulli(rng, 0.5) ? 1.0 : 0.0;
    spec.prototypes.push_back(std::move(y));
  }
  const double total = std::accumulate(kStandardWeights.begin(), kStandardWeights.end(), 0.0);
  for (double w : kStandardWeights) spec.weights.push_back(w / total);
  spec.flip_probs.assign(kStandardFlipProbs.begin(), kStandardFlipProbs.end());
  return spec;
}

inline MixtureSpec standard_spec_from_seed(std::uint64_t seed, int image_side = 28) {
  Rng rng = make_stream(seed, 0);
  MixtureSpec spec = standard_spec(rng, image_side);
  spec.seed = seed;
  return spec;
}

template <typename Engine>
inline std::size_t sample_component(const MixtureSpec& spec, Engine& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t m = 0; m < spec.weights.size(); ++m) {
    if (spec.weights[m] > 0.0) last_positive = m;
    cumulative += spec.weights[m];
    if (u < cumulative) return m;
  }
  return last_positive;
}

template <typename Engine>
inline Vector sample(const MixtureSpec& spec, Engine& rng) {
  const std::size_t m = sample_component(spec, rng);
  Vector v = spec.prototypes[m];
  const double p = spec.flip_probs[m];
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (bernoulli(rng, p)) v[j] = 1.0 - v[j];
  }
  return v;
}

template <typename Engine>
inline BinaryMatrix sample_batch(const MixtureSpec& spec, std::size_t count, Engine& rng) {
  BinaryMatrix out(spec.num_pixels(), static_cast<Eigen::Index>(count));
  for (std::size_t c = 0; c < count; ++c) out.col(static_cast<Eigen::Index>(c)) = sample(spec, rng);
  return out;
}

// Exact log density of v under the mixture.
inline double mixture_log_likelihood(const MixtureSpec& spec, const Vector& v) {
  if (v.size() != spec.num_pixels()) throw DimensionError("mixture_log_likelihood: wrong image size");
  const double n = static_cast<double>(v.size());
  detail::LogSumExp acc;
  for (std::size_t m = 0; m < spec.prototypes.size(); ++m) {
    if (spec.weights[m] <= 0.0) continue;
    const double mismatches = (v - spec.prototypes[m]).cwiseAbs().sum();
    const double p = spec.flip_probs[m];
    double term = std::log(spec.weights[m]);
    // 0 * log(0) counts as 0
    if (mismatches > 0.0) term += p > 0.0 ? mismatches * std::log(p) : -std::numeric_limits<double>::infinity();
    if (n - mismatches > 0.0) term += p < 1.0 ? (n - mismatches) * std::log1p(-p) : -std::numeric_limits<double>::infinity();
    acc.add(term);
  }
  return acc.value();
}

// Infinite stream of fresh examples over a private RNG stream.
class MixtureStream {
 public:
  MixtureStream(MixtureSpec spec, Rng rng) : spec_(std::move(spec)), rng_(std::move(rng)) {}

  Vector next() { return sample(spec_, rng_); }
  BinaryMatrix next_batch(std::size_t count) { return sample_batch(spec_, count, rng_); }
  const MixtureSpec& spec() const { return spec_; }

 private:
  MixtureSpec spec_;
  Rng rng_;
};

inline nlohmann::json spec_to_json(const MixtureSpec& spec) {
  std::vector<std::string> protos;
  for (const auto& y : spec.prototypes) {
    std::string bits(static_cast<std::size_t>(y.size()), '0');
    for (Eigen::Index j = 0; j < y.size(); ++j) bits[static_cast<std::size_t>(j)] = y[j] != 0.0 ? '1' : '0';
    protos.push_back(std::move(bits));
  }
  return {{"image_side", spec.image_side}, {"seed", spec.seed},        {"weights", spec.weights},
          {"flip_probs", spec.flip_probs}, {"prototypes", protos}};
}

inline MixtureSpec spec_from_json(const nlohmann::json& j) {
  MixtureSpec spec;
  spec.image_side = j.at("image_side").get<int>();
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.weights = j.at("weights").get<std::vector<double>>();
  spec.flip_probs = j.at("flip_probs").get<std::vector<double>>();
  for (const auto& bits : j.at("prototypes").get<std::vector<std::string>>()) {
    Vector y(static_cast<Eigen::Index>(bits.size()));
    for (std::size_t k = 0; k < bits.size(); ++k) {
      if (bits[k] != '0' && bits[k] != '1') throw std::invalid_argument("spec_from_json: bad bit-string");
      y[static_cast<Eigen::Index>(k)] = bits[k] == '1' ? 1.0 : 0.0;
    }
    spec.prototypes.push_back(std::move(y));
  }
  spec.validate();
  return spec;
}

// Packed-bit snapshot: uint64 count, uint64 width, then count rows of
// ceil(width/8) bytes, bit j of a row at byte j/8, position j%8 (LSB first).
inline void write_snapshot(std::ostream& os, const BinaryMatrix& examples) {
  const auto count = static_cast<std::uint64_t>(examples.cols());
  const auto width = static_cast<std::uint64_t>(examples.rows());
  os.write(reinterpret_cast<const char*>(&count), sizeof count);
  os.write(reinterpret_cast<const char*>(&width), sizeof width);
  std::vector<unsigned char> row((width + 7) / 8);
  for (Eigen::Index c = 0; c < examples.cols(); ++c) {
    std::fill(row.begin(), row.end(), 0);
    for (Eigen::Index j = 0; j < examples.rows(); ++j) {
      if (examples(j, c) != 0.0) row[static_cast<std::size_t>(j / 8)] |= static_cast<unsigned char>(1u << (j % 8));
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

inline BinaryMatrix read_snapshot(std::istream& is) {
  std::uint64_t count = 0, width = 0;
  if (!is.read(reinterpret_cast<char*>(&count), sizeof count) ||
      !is.read(reinterpret_cast<char*>(&width), sizeof width)) {
    throw std::runtime_error("read_snapshot: truncated header");
  }
  if (width > (1u << 24)) throw std::runtime_error("read_snapshot: implausible width");
  BinaryMatrix out(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(count));
  std::vector<unsigned char> row((width + 7) / 8);
  for (std::uint64_t c = 0; c < count; ++c) {
    if (!is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
      throw std::runtime_error("read_snapshot: truncated body");
    for (std::uint64_t j = 0; j < width; ++j) {
      out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = (row[j / 8] >> (j % 8)) & 1u;
    }
  }
  return out;
}

}  // namespace aptrbm
