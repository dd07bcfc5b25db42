#pragma once

// Online temperature respacing toward a linear f_up profile, and chain
// spawning to hold the mean adjacent swap rate above a floor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "aptrbm/tempering.hpp"

namespace aptrbm {

struct AdaptationConfig {
  double beta_learning_rate = 1e-4;  // mu
  double min_avg_swap_rate = 0.4;    // r_min
  std::uint64_t spawn_check_interval = 1000;
  std::uint64_t burn_in_sweeps = 100;
  std::uint64_t max_chains = 100;

  void validate() const {
    if (!(beta_learning_rate >= 0.0 && beta_learning_rate <= 1.0))
      throw std::invalid_argument("beta_learning_rate must lie in [0, 1]");
    if (!(min_avg_swap_rate >= 0.0 && min_avg_swap_rate < 1.0))
      throw std::invalid_argument("min_avg_swap_rate must lie in [0, 1)");
    if (spawn_check_interval == 0) throw std::invalid_argument("spawn_check_interval must be > 0");
    if (max_chains < 1) throw std::invalid_argument("max_chains must be >= 1");
  }
};

struct SpawnEvent {
  std::uint64_t update_index = 0;
  std::size_t gap_index = 0;  // new chain sits between old slots gap_index and gap_index+1
  double beta = 0.0;
  std::size_t num_chains_after = 0;
};

inline constexpr double kMinBetaGap = 1e-6;

namespace detail {

// Pushes interior entries apart so consecutive betas differ by at least
// kMinBetaGap; endpoints stay fixed. No-op on a well-separated ladder.
inline void enforce_min_gap(std::vector<double>& betas) {
  const std::size_t m = betas.size();
  if (m < 3) return;
  for (std::size_t i = 1; i + 1 < m; ++i) {
    betas[i] = std::min(betas[i], betas[i - 1] - kMinBetaGap);
  }
  for (std::size_t i = m - 2; i >= 1; --i) {
    betas[i] = std::max(betas[i], betas[i + 1] + kMinBetaGap);
    if (i == 1) break;
  }
}

}  // namespace detail

// Ladder that places f_up(beta'_i) = 1 - i/(M-1) on the piecewise-linear
// interpolant of the (monotonised) measured f_up.
inline std::vector<double> optimal_betas(const std::vector<double>& betas,
                                         const std::vector<double>& fup) {
  const std::size_t m = betas.size();
  if (fup.size() != m) throw std::invalid_argument("optimal_betas: size mismatch");
  for (double f : fup) {
    if (!std::isfinite(f)) throw std::invalid_argument("optimal_betas: non-finite f_up entry");
  }
  if (m <= 2) return betas;

  // running minimum along the ladder
  std::vector<double> g(m);
  g[0] = std::min(1.0, fup[0]);
  for (std::size_t i = 1; i < m; ++i) g[i] = std::min(g[i - 1], fup[i]);

  std::vector<double> out(m);
  out.front() = betas.front();
  out.back() = betas.back();
  const double last = static_cast<double>(m - 1);
  std::size_t seg = 0;
  for (std::size_t k = 1; k + 1 < m; ++k) {
    const double level = 1.0 - static_cast<double>(k) / last;
    // first segment whose lower knot has dropped to the level
    while (seg + 2 < m && g[seg + 1] > level) ++seg;
    const double hi = g[seg], lo = g[seg + 1];
    double beta;
    if (hi > lo) {
      const double t = std::clamp((hi - level) / (hi - lo), 0.0, 1.0);
      beta = betas[seg] + t * (betas[seg + 1] - betas[seg]);
    } else {
      beta = 0.5 * (betas[seg] + betas[seg + 1]);
    }
    out[k] = beta;
  }
  detail::enforce_min_gap(out);
  return out;
}

// beta_i += mu (beta'_i - beta_i) on the interior slots.
inline void adapt_betas(Ensemble& ensemble, const AdaptationConfig& config) {
  const std::size_t m = ensemble.size();
  if (m <= 2 || config.beta_learning_rate == 0.0) return;
  const auto target = optimal_betas(ensemble.betas, f_up(ensemble));
  const double mu = config.beta_learning_rate;
  for (std::size_t i = 1; i + 1 < m; ++i) {
    ensemble.betas[i] += mu * (target[i] - ensemble.betas[i]);
  }
  detail::enforce_min_gap(ensemble.betas);
}

// Mean of the per-pair swap-rate estimates; 1.0 when there are no pairs.
inline double average_swap_rate(const Ensemble& ensemble) {
  if (ensemble.swap_stats.empty()) return 1.0;
  double total = 0.0;
  for (const auto& s : ensemble.swap_stats) total += s.rate();
  return total / static_cast<double>(ensemble.swap_stats.size());
}

// Inserts one chain in the widest f_up gap when the mean swap rate has dropped
// below the floor. Suspended during burn-in.
inline std::optional<SpawnEvent> maybe_spawn(Ensemble& ensemble, const AdaptationConfig& config,
                                             std::uint64_t update_index = 0) {
  const std::size_t m = ensemble.size();
  if (m < 2 || ensemble.burn_in_remaining > 0) return std::nullopt;
  if (average_swap_rate(ensemble) >= config.min_avg_swap_rate) return std::nullopt;
  if (m >= config.max_chains) {
    std::clog << "aptrbm: swap rate below floor but max_chains=" << config.max_chains
              << " reached at update " << update_index << '\n';
    return std::nullopt;
  }

  const auto fup = f_up(ensemble);
  std::size_t j = 0;
  double widest = -1.0;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double gap = std::abs(fup[i] - fup[i + 1]);
    if (gap > widest) {
      widest = gap;
      j = i;
    }
  }

  const double beta = 0.5 * (ensemble.betas[j] + ensemble.betas[j + 1]);
  const auto at = static_cast<std::ptrdiff_t>(j + 1);
  Particle fresh{ensemble.particles[j + 1].state, Label::kUnset, 0};
  const double up = 0.5 * (ensemble.n_up[j] + ensemble.n_up[j + 1]);
  const double down = 0.5 * (ensemble.n_down[j] + ensemble.n_down[j + 1]);

  ensemble.betas.insert(ensemble.betas.begin() + at, beta);
  ensemble.particles.insert(ensemble.particles.begin() + at, std::move(fresh));
  ensemble.n_up.insert(ensemble.n_up.begin() + at, up);
  ensemble.n_down.insert(ensemble.n_down.begin() + at, down);
  ensemble.swap_stats[j] = PairSwapStats{};
  ensemble.swap_stats.insert(ensemble.swap_stats.begin() + at, PairSwapStats{});
  ensemble.burn_in_remaining = config.burn_in_sweeps;

  return SpawnEvent{update_index, j, beta, ensemble.size()};
}

}  // namespace aptrbm
