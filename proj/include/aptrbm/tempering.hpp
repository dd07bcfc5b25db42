#pragma once

// Parallel-tempered persistent chains with a deterministic even/odd swap
// schedule. Temperatures stay in fixed slots; configurations move between
// them, carrying their flow label and return-time counter with them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aptrbm/random.hpp"
#include "aptrbm/rbm.hpp"

namespace aptrbm {

enum class Label : std::uint8_t { kUnset, kUp, kDown };

struct Particle {
  JointState state;
  Label label = Label::kUnset;
  std::uint64_t return_counter = 0;
};

// Bias-corrected exponential moving average of 0/1 swap outcomes for one
// adjacent pair. Reads 1.0 until the first proposal.
struct PairSwapStats {
  static constexpr double kDecay = 0.99;
  double weighted_accepts = 0.0;
  double weight = 0.0;

  void observe(bool accepted) {
    weighted_accepts = kDecay * weighted_accepts + (accepted ? 1.0 : 0.0);
    weight = kDecay * weight + 1.0;
  }
  double rate() const { return weight > 0.0 ? weighted_accepts / weight : 1.0; }
};

enum class SwapOutcome : std::int8_t { kNotProposed = -1, kRejected = 0, kAccepted = 1 };

struct SweepReport {
  std::uint64_t sweep_index = 0;
  std::vector<SwapOutcome> swaps;                   // one entry per adjacent pair
  std::vector<std::uint64_t> round_trip_durations;  // completed during this sweep
  double tau_hat = 1.0;
};

struct Ensemble {
  static constexpr double kRoundTripDecay = 0.9;

  std::vector<double> betas;  // strictly decreasing, 1 ... 0
  std::vector<Particle> particles;
  std::vector<double> n_up;
  std::vector<double> n_down;
  std::vector<PairSwapStats> swap_stats;  // size M-1
  double tau_hat = 1.0;
  int sweep_parity = 0;  // 0: pairs (0,1),(2,3)...; 1: pairs (1,2),(3,4)...
  std::uint64_t burn_in_remaining = 0;
  std::uint64_t sweeps_done = 0;
  std::uint64_t round_trips_completed = 0;
  std::optional<double> round_trip_ema;

  std::size_t size() const { return betas.size(); }

  std::vector<double> swap_rates() const {
    std::vector<double> out;
    out.reserve(swap_stats.size());
    for (const auto& s : swap_stats) out.push_back(s.rate());
    return out;
  }

  // The beta = 1 chain that feeds the negative phase.
  const JointState& nominal_state() const { return particles.front().state; }

  // Flow statistics exist once some particle has completed a round trip.
  bool warm() const { return round_trips_completed > 0; }

  void validate() const {
    const std::size_t m = betas.size();
    if (m == 0) throw std::invalid_argument("Ensemble: empty ladder");
    if (particles.size() != m || n_up.size() != m || n_down.size() != m ||
        swap_stats.size() != m - 1) {
      throw std::invalid_argument("Ensemble: per-slot arrays disagree with ladder size");
    }
    if (betas.front() != 1.0) throw std::invalid_argument("Ensemble: beta_1 must be 1");
    if (m > 1 && betas.back() != 0.0) throw std::invalid_argument("Ensemble: beta_M must be 0");
    for (std::size_t i = 0; i + 1 < m; ++i) {
      if (!(betas[i] > betas[i + 1])) {
        throw std::invalid_argument("Ensemble: ladder not strictly decreasing at slot " +
                                    std::to_string(i));
      }
    }
    if (!(tau_hat >= 1.0)) throw std::invalid_argument("Ensemble: tau_hat < 1");
  }
};

inline std::vector<double> linear_ladder(std::size_t num_chains) {
  if (num_chains == 0) throw std::invalid_argument("linear_ladder: need at least one chain");
  if (num_chains == 1) return {1.0};
  std::vector<double> betas(num_chains);
  const double last = static_cast<double>(num_chains - 1);
  for (std::size_t i = 0; i < num_chains; ++i) betas[i] = 1.0 - static_cast<double>(i) / last;
  betas.back() = 0.0;
  return betas;
}

// Temperatures in geometric progression from 1 to 1/beta_min, then infinite
// temperature in the last slot.
inline std::vector<double> geometric_ladder(std::size_t num_chains, double beta_min) {
  if (num_chains <= 2) return linear_ladder(num_chains);
  if (!(beta_min > 0.0 && beta_min < 1.0)) {
    throw std::invalid_argument("geometric_ladder: beta_min must lie in (0, 1)");
  }
  std::vector<double> betas(num_chains);
  const double steps = static_cast<double>(num_chains - 2);
  for (std::size_t i = 0; i + 1 < num_chains; ++i) {
    betas[i] = std::pow(beta_min, static_cast<double>(i) / steps);
  }
  betas.front() = 1.0;
  betas.back() = 0.0;
  return betas;
}

// Ensemble on the given ladder with uniformly random initial configurations.
template <typename Engine>
inline Ensemble make_ensemble(std::vector<double> betas, Eigen::Index num_visible,
                              Eigen::Index num_hidden, Engine& rng) {
  Ensemble e;
  const std::size_t m = betas.size();
  e.betas = std::move(betas);
  e.particles.resize(m);
  for (auto& p : e.particles) {
    p.state.visible.resize(num_visible);
    p.state.hidden.resize(num_hidden);
    for (Eigen::Index j = 0; j < num_visible; ++j) p.state.visible[j] = bernoulli(rng, 0.5);
    for (Eigen::Index i = 0; i < num_hidden; ++i) p.state.hidden[i] = bernoulli(rng, 0.5);
  }
  e.n_up.assign(m, 0.0);
  e.n_down.assign(m, 0.0);
  e.swap_stats.assign(m > 0 ? m - 1 : 0, PairSwapStats{});
  e.validate();
  return e;
}

// Metropolis acceptance probability for exchanging the configurations held at
// inverse temperatures beta_i >= beta_j.
inline double swap_ratio(double energy_i, double energy_j, double beta_i, double beta_j) {
  const double exponent = (beta_i - beta_j) * (energy_i - energy_j);
  if (!(exponent < 0.0)) return 1.0;
  return std::exp(std::max(exponent, -745.0));
}

// k Gibbs steps on every chain, one round of swap proposals on the pairs of the
// current parity, then label/counter bookkeeping.
template <typename Engine>
inline SweepReport deo_sweep(Ensemble& ensemble, const RbmParams& params, std::uint64_t gibbs_steps,
                             Engine& rng) {
  const std::size_t m = ensemble.size();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::uint64_t s = 0; s < gibbs_steps; ++s) {
      gibbs_update(params, ensemble.particles[i].state, ensemble.betas[i], rng);
    }
  }

  SweepReport report;
  report.sweep_index = ensemble.sweeps_done++;
  report.swaps.assign(m > 0 ? m - 1 : 0, SwapOutcome::kNotProposed);
  if (m < 2) {
    report.tau_hat = ensemble.tau_hat;
    return report;
  }

  for (std::size_t i = static_cast<std::size_t>(ensemble.sweep_parity); i + 1 < m; i += 2) {
    auto& lo = ensemble.particles[i];
    auto& hi = ensemble.particles[i + 1];
    const double accept = swap_ratio(energy(params, lo.state), energy(params, hi.state),
                                     ensemble.betas[i], ensemble.betas[i + 1]);
    const bool accepted = uniform01(rng) < accept;
    ensemble.swap_stats[i].observe(accepted);
    report.swaps[i] = accepted ? SwapOutcome::kAccepted : SwapOutcome::kRejected;
    if (accepted) std::swap(lo, hi);
  }
  ensemble.sweep_parity ^= 1;

  for (auto& p : ensemble.particles) ++p.return_counter;

  Particle& top = ensemble.particles.front();
  if (top.label == Label::kDown) {
    const auto duration = top.return_counter;
    report.round_trip_durations.push_back(duration);
    ++ensemble.round_trips_completed;
    const double d = static_cast<double>(duration);
    ensemble.round_trip_ema = ensemble.round_trip_ema
                                  ? Ensemble::kRoundTripDecay * *ensemble.round_trip_ema +
                                        (1.0 - Ensemble::kRoundTripDecay) * d
                                  : d;
    top.return_counter = 0;
  }
  top.label = Label::kUp;

  Particle& bottom = ensemble.particles.back();
  if (bottom.label == Label::kUp) bottom.label = Label::kDown;

  report.tau_hat = ensemble.tau_hat;
  return report;
}

// Refreshes and returns the return-time estimate (floored at 1).
inline double estimate_return_time(Ensemble& ensemble) {
  double value = 0.0;
  if (ensemble.round_trip_ema) {
    value = *ensemble.round_trip_ema;
  } else {
    for (const auto& p : ensemble.particles) value += static_cast<double>(p.return_counter);
  }
  ensemble.tau_hat = std::max(1.0, value);
  return ensemble.tau_hat;
}

// EMA update of the up/down occupancy histograms with time constant tau_hat.
inline void update_flow_histograms(Ensemble& ensemble) {
  const double rate = 1.0 / std::max(1.0, ensemble.tau_hat);
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const Label label = ensemble.particles[i].label;
    ensemble.n_up[i] = ensemble.n_up[i] * keep + (label == Label::kUp ? rate : 0.0);
    ensemble.n_down[i] = ensemble.n_down[i] * keep + (label == Label::kDown ? rate : 0.0);
  }
}

// Fraction of up-moving particles per slot; boundaries pinned to 1 and 0,
// interior slots with no flow yet read 0.5.
inline std::vector<double> f_up(const Ensemble& ensemble) {
  const std::size_t m = ensemble.size();
  if (m == 1) return {1.0};
  std::vector<double> out(m, 0.5);
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const double total = ensemble.n_up[i] + ensemble.n_down[i];
    if (total > 0.0) out[i] = ensemble.n_up[i] / total;
  }
  out.front() = 1.0;
  out.back() = 0.0;
  return out;
}

}  // namespace aptrbm
