#pragma once

// Parameter snapshots. Binary layout (little-endian):
//   uint64 num_visible, uint64 num_hidden,
//   float64 weights[num_hidden][num_visible] (row-major),
//   float64 hidden_bias[num_hidden], float64 visible_bias[num_visible]

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "aptrbm/rbm.hpp"

namespace aptrbm {

static_assert(std::endian::native == std::endian::little, "snapshot format assumes little-endian");

namespace detail {

template <typename T>
inline void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
inline T read_pod(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw std::runtime_error("truncated parameter snapshot");
  }
  return value;
}

}  // namespace detail

inline void write_params_binary(std::ostream& os, const RbmParams& params) {
  params.check_shapes();
  detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(params.num_visible()));
  detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(params.num_hidden()));
  for (Eigen::Index i = 0; i < params.num_hidden(); ++i)
    for (Eigen::Index j = 0; j < params.num_visible(); ++j)
      detail::write_pod<double>(os, params.weights(i, j));
  for (Eigen::Index i = 0; i < params.num_hidden(); ++i)
    detail::write_pod<double>(os, params.hidden_bias[i]);
  for (Eigen::Index j = 0; j < params.num_visible(); ++j)
    detail::write_pod<double>(os, params.visible_bias[j]);
}

inline RbmParams read_params_binary(std::istream& is) {
  const auto nv = detail::read_pod<std::uint64_t>(is);
  const auto nh = detail::read_pod<std::uint64_t>(is);
  if (nv > (1u << 24) || nh > (1u << 24)) throw std::runtime_error("implausible snapshot dims");
  RbmParams params = RbmParams::zeros(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nh));
  for (Eigen::Index i = 0; i < params.num_hidden(); ++i)
    for (Eigen::Index j = 0; j < params.num_visible(); ++j)
      params.weights(i, j) = detail::read_pod<double>(is);
  for (Eigen::Index i = 0; i < params.num_hidden(); ++i)
    params.hidden_bias[i] = detail::read_pod<double>(is);
  for (Eigen::Index j = 0; j < params.num_visible(); ++j)
    params.visible_bias[j] = detail::read_pod<double>(is);
  return params;
}

inline nlohmann::json params_to_json(const RbmParams& params) {
  params.check_shapes();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(params.weights.size()));
  for (Eigen::Index i = 0; i < params.num_hidden(); ++i)
    for (Eigen::Index j = 0; j < params.num_visible(); ++j) flat.push_back(params.weights(i, j));
  return {
      {"num_visible", params.num_visible()},
      {"num_hidden", params.num_hidden()},
      {"weights", flat},
      {"hidden_bias", std::vector<double>(params.hidden_bias.begin(), params.hidden_bias.end())},
      {"visible_bias", std::vector<double>(params.visible_bias.begin(), params.visible_bias.end())},
  };
}

inline RbmParams params_from_json(const nlohmann::json& j) {
  const auto nv = j.at("num_visible").get<Eigen::Index>();
  const auto nh = j.at("num_hidden").get<Eigen::Index>();
  const auto flat = j.at("weights").get<std::vector<double>>();
  const auto b = j.at("hidden_bias").get<std::vector<double>>();
  const auto c = j.at("visible_bias").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != nv * nh ||
      static_cast<Eigen::Index>(b.size()) != nh || static_cast<Eigen::Index>(c.size()) != nv) {
    throw DimensionError("params_from_json: array lengths disagree with dims");
  }
  RbmParams params = RbmParams::zeros(nv, nh);
  for (Eigen::Index i = 0; i < nh; ++i)
    for (Eigen::Index jj = 0; jj < nv; ++jj)
      params.weights(i, jj) = flat[static_cast<std::size_t>(i * nv + jj)];
  params.hidden_bias = Eigen::Map<const Vector>(b.data(), nh);
  params.visible_bias = Eigen::Map<const Vector>(c.data(), nv);
  return params;
}

}  // namespace aptrbm
