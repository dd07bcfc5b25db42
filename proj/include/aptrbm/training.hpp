#pragma once

// Stochastic maximum likelihood with a pluggable negative-phase sampler:
// a single beta=1 chain (SML), a fixed tempered ladder (SML-PT) or an
// adaptive ladder (SML-APT).

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aptrbm/adaptation.hpp"
#include "aptrbm/random.hpp"
#include "aptrbm/rbm.hpp"
#include "aptrbm/tempering.hpp"

namespace aptrbm {

enum class Algorithm { kSml, kSmlPt, kSmlApt };
enum class LadderKind { kLinear, kGeometric };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kSml: return "SML";
    case Algorithm::kSmlPt: return "SML_PT";
    case Algorithm::kSmlApt: return "SML_APT";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "SML" || s == "sml") return Algorithm::kSml;
  if (s == "SML_PT" || s == "SML-PT" || s == "sml-pt" || s == "pt") return Algorithm::kSmlPt;
  if (s == "SML_APT" || s == "SML-APT" || s == "sml-apt" || s == "apt") return Algorithm::kSmlApt;
  throw std::invalid_argument("unknown algorithm '" + std::string(s) + "'");
}

inline std::string_view to_string(LadderKind k) {
  return k == LadderKind::kLinear ? "linear" : "geometric";
}

inline LadderKind parse_ladder(std::string_view s) {
  if (s == "linear") return LadderKind::kLinear;
  if (s == "geometric") return LadderKind::kGeometric;
  throw std::invalid_argument("unknown ladder '" + std::string(s) + "'");
}

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDivergenceBound = 1e6;

struct TrainConfig {
  Algorithm algorithm = Algorithm::kSmlApt;
  double learning_rate = 1e-3;
  std::uint64_t num_updates = 100000;
  std::uint64_t minibatch_size = 5;
  std::uint64_t gibbs_steps_per_update = 1;
  std::uint64_t num_hidden = 10;
  std::uint64_t initial_num_chains = 10;
  LadderKind initial_ladder = LadderKind::kLinear;
  double geometric_beta_min = 0.01;
  AdaptationConfig adaptation;
  std::uint64_t post_sampling_steps = 20000;
  std::uint64_t eval_interval = 1000;
  std::uint64_t seed = 1;
  bool record_wall_clock = false;
  int exact_cap = 25;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("learning_rate must be finite and non-negative");
    if (num_updates == 0 || minibatch_size == 0 || gibbs_steps_per_update == 0 ||
        num_hidden == 0 || initial_num_chains == 0 || eval_interval == 0) {
      throw std::invalid_argument("TrainConfig: counts must be positive");
    }
    if (algorithm != Algorithm::kSml && initial_num_chains < 2)
      throw std::invalid_argument("tempered algorithms need at least two chains");
    adaptation.validate();
  }

  std::size_t num_chains_at_start() const {
    return algorithm == Algorithm::kSml ? 1 : static_cast<std::size_t>(initial_num_chains);
  }
};

struct MetricsRecord {
  std::uint64_t update_index = 0;
  double wall_clock_seconds = 0.0;
  std::optional<double> train_loglik;
  double tau_hat = 1.0;
  double avg_swap_rate = 1.0;
  std::size_t num_chains = 1;
  std::vector<double> betas;
  std::vector<double> fup;
  std::vector<double> pair_swap_rates;
  // not part of the CSV row
  bool in_burn_in = false;
};

struct Divergence {
  std::uint64_t update_index = 0;
  std::string message;
};

struct TrainResult {
  RbmParams params;
  Ensemble ensemble;
  std::vector<MetricsRecord> metrics;
  std::vector<SpawnEvent> spawns;
  std::optional<Divergence> divergence;
  double wall_clock_seconds = 0.0;
};

// Small symmetric uniform weights, zero biases.
template <typename Engine>
inline RbmParams init_params(Eigen::Index num_visible, Eigen::Index num_hidden, Engine& rng) {
  RbmParams params = RbmParams::zeros(num_visible, num_hidden);
  const double scale = 1.0 / std::sqrt(static_cast<double>(num_visible * num_hidden));
  for (Eigen::Index i = 0; i < num_hidden; ++i)
    for (Eigen::Index j = 0; j < num_visible; ++j)
      params.weights(i, j) = scale * (2.0 * uniform01(rng) - 1.0);
  return params;
}

// Minibatch mean of phi(v, E[h|v]).
inline GradStats positive_phase(const RbmParams& params, const BinaryMatrix& minibatch) {
  if (minibatch.rows() != params.num_visible()) throw DimensionError("positive_phase: minibatch width");
  if (minibatch.cols() == 0) throw std::invalid_argument("positive_phase: empty minibatch");
  const double inv = 1.0 / static_cast<double>(minibatch.cols());
  const Matrix act = (params.weights * minibatch).colwise() + params.hidden_bias;
  const Matrix probs = (1.0 + (-act.array()).exp()).inverse().matrix();
  return {probs * minibatch.transpose() * inv, probs.rowwise().sum() * inv,
          minibatch.rowwise().sum() * inv};
}

// phi(v-, E[h|v-]) through the same code path as the positive phase.
inline GradStats negative_phase(const RbmParams& params, const Vector& negative_visible) {
  return positive_phase(params, BinaryMatrix(negative_visible));
}

// params += learning_rate * (positive - negative); throws DivergenceError and
// leaves params untouched if the result would be non-finite or blow past the
// divergence bound.
inline GradStats sml_update(RbmParams& params, const BinaryMatrix& minibatch,
                            const JointState& negative, double learning_rate) {
  GradStats step = positive_phase(params, minibatch) - negative_phase(params, negative.visible);
  if (learning_rate == 0.0) return step;
  RbmParams next = params;
  next.weights.noalias() += learning_rate * step.weight_stats;
  next.hidden_bias.noalias() += learning_rate * step.hidden_stats;
  next.visible_bias.noalias() += learning_rate * step.visible_stats;
  if (!next.all_finite()) throw DivergenceError("non-finite parameters after update");
  if (next.max_abs() > kDivergenceBound) {
    throw DivergenceError("parameter magnitude exceeded " + std::to_string(kDivergenceBound));
  }
  params = std::move(next);
  return step;
}

// Owns the persistent chains and drives them one sweep per update.
class NegativeSampler {
 public:
  template <typename Engine>
  NegativeSampler(const TrainConfig& config, Eigen::Index num_visible, Eigen::Index num_hidden,
                  Engine& rng)
      : algorithm_(config.algorithm),
        gibbs_steps_(config.gibbs_steps_per_update),
        adaptation_(config.adaptation) {
    const std::size_t m = config.num_chains_at_start();
    auto betas = config.initial_ladder == LadderKind::kLinear
                     ? linear_ladder(m)
                     : geometric_ladder(m, config.geometric_beta_min);
    ensemble_ = make_ensemble(std::move(betas), num_visible, num_hidden, rng);
  }

  // One sampling iteration: sweep, flow statistics, and for the adaptive
  // sampler the beta step and the periodic spawn check.
  template <typename Engine>
  SweepReport advance(const RbmParams& params, std::uint64_t update_index, Engine& rng,
                      std::vector<SpawnEvent>* spawns = nullptr) {
    SweepReport report = deo_sweep(ensemble_, params, gibbs_steps_, rng);
    if (algorithm_ == Algorithm::kSml) return report;

    estimate_return_time(ensemble_);
    update_flow_histograms(ensemble_);
    report.tau_hat = ensemble_.tau_hat;
    if (algorithm_ != Algorithm::kSmlApt) return report;

    if (ensemble_.burn_in_remaining > 0) {
      --ensemble_.burn_in_remaining;
    } else if (ensemble_.warm()) {
      adapt_betas(ensemble_, adaptation_);
    }
    if (update_index % adaptation_.spawn_check_interval == 0) {
      if (auto event = maybe_spawn(ensemble_, adaptation_, update_index); event && spawns) {
        spawns->push_back(*event);
      }
    }
    return report;
  }

  const JointState& negative_particle() const { return ensemble_.nominal_state(); }
  const Ensemble& ensemble() const { return ensemble_; }
  Ensemble& ensemble() { return ensemble_; }
  Algorithm algorithm() const { return algorithm_; }

 private:
  Algorithm algorithm_;
  std::uint64_t gibbs_steps_;
  AdaptationConfig adaptation_;
  Ensemble ensemble_;
};

inline MetricsRecord snapshot_metrics(std::uint64_t update_index, double wall_clock,
                                      std::optional<double> loglik, const Ensemble& ensemble) {
  MetricsRecord r;
  r.update_index = update_index;
  r.wall_clock_seconds = wall_clock;
  r.train_loglik = loglik;
  r.tau_hat = ensemble.tau_hat;
  r.avg_swap_rate = average_swap_rate(ensemble);
  r.num_chains = ensemble.size();
  r.betas = ensemble.betas;
  r.fup = f_up(ensemble);
  r.pair_swap_rates = ensemble.swap_rates();
  r.in_burn_in = ensemble.burn_in_remaining > 0;
  return r;
}

// Exact mean log-likelihood on the evaluation set, or nullopt when the model
// is too large to enumerate (or there is nothing to evaluate).
inline std::optional<double> evaluate_loglik(const RbmParams& params, const BinaryMatrix& eval_set,
                                             int exact_cap) {
  if (eval_set.cols() == 0) return std::nullopt;
  try {
    return exact_log_likelihood(params, eval_set, ExactOptions{exact_cap, Enumerate::kAuto});
  } catch (const IntractableError&) {
    return std::nullopt;
  }
}

// Runs num_updates gradient updates followed by post_sampling_steps sweeps at
// learning rate 0. A metrics row is taken at update 0, every eval_interval
// iterations, and after the last iteration.
template <typename Stream>
TrainResult train(const TrainConfig& config, Stream& stream, const BinaryMatrix& eval_set) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  auto clock_column = [&] { return config.record_wall_clock ? elapsed() : 0.0; };

  Rng rng = make_stream(config.seed, 1);
  const Eigen::Index nv = stream.spec().num_pixels();
  const auto nh = static_cast<Eigen::Index>(config.num_hidden);

  TrainResult result;
  result.params = init_params(nv, nh, rng);
  NegativeSampler sampler(config, nv, nh, rng);

  result.metrics.push_back(snapshot_metrics(
      0, clock_column(), evaluate_loglik(result.params, eval_set, config.exact_cap), sampler.ensemble()));

  const std::uint64_t total = config.num_updates + config.post_sampling_steps;
  for (std::uint64_t t = 1; t <= total; ++t) {
    const bool learning = t <= config.num_updates;
    BinaryMatrix batch;
    if (learning) batch = stream.next_batch(static_cast<std::size_t>(config.minibatch_size));
    sampler.advance(result.params, t, rng, &result.spawns);
    if (learning) {
      try {
        sml_update(result.params, batch, sampler.negative_particle(), config.learning_rate);
      } catch (const DivergenceError& e) {
        result.divergence = Divergence{t, e.what()};
        result.metrics.push_back(snapshot_metrics(
            t, clock_column(), evaluate_loglik(result.params, eval_set, config.exact_cap),
            sampler.ensemble()));
        break;
      }
    }
    if (t % config.eval_interval == 0 || t == total) {
      result.metrics.push_back(snapshot_metrics(
          t, clock_column(), evaluate_loglik(result.params, eval_set, config.exact_cap),
          sampler.ensemble()));
    }
  }
  result.ensemble = sampler.ensemble();
  result.wall_clock_seconds = elapsed();
  return result;
}

// ---- CSV ------------------------------------------------------------------

inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

inline std::string join_doubles(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ';';
    out += format_double(xs[i]);
  }
  return out;
}

inline constexpr std::string_view kMetricsCsvHeader =
    "update_index,wall_clock_seconds,train_loglik,tau_hat,avg_swap_rate,num_chains,betas,fup,"
    "pair_swap_rates";

inline std::string format_metrics_row(const MetricsRecord& r) {
  std::string row = std::to_string(r.update_index);
  row += ',' + format_double(r.wall_clock_seconds);
  row += ',' + (r.train_loglik ? format_double(*r.train_loglik) : std::string("n/a"));
  row += ',' + format_double(r.tau_hat);
  row += ',' + format_double(r.avg_swap_rate);
  row += ',' + std::to_string(r.num_chains);
  row += ',' + join_doubles(r.betas);
  row += ',' + join_doubles(r.fup);
  row += ',' + join_doubles(r.pair_swap_rates);
  return row;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << kMetricsCsvHeader << '\n';
  for (const auto& r : records) os << format_metrics_row(r) << '\n';
}

// sweep_index,swaps,round_trips,tau_hat with swaps as 1/0/- per pair.
inline std::string format_sweep_row(const SweepReport& report) {
  std::string swaps;
  for (std::size_t i = 0; i < report.swaps.size(); ++i) {
    if (i) swaps += ';';
    switch (report.swaps[i]) {
      case SwapOutcome::kAccepted: swaps += '1'; break;
      case SwapOutcome::kRejected: swaps += '0'; break;
      case SwapOutcome::kNotProposed: swaps += '-'; break;
    }
  }
  return std::to_string(report.sweep_index) + ',' + swaps + ',' +
         std::to_string(report.round_trip_durations.size()) + ',' + format_double(report.tau_hat);
}

inline constexpr std::string_view kSpawnCsvHeader = "update_index,gap_index,beta,num_chains_after";

inline std::string format_spawn_row(const SpawnEvent& e) {
  return std::to_string(e.update_index) + ',' + std::to_string(e.gap_index) + ',' +
         format_double(e.beta) + ',' + std::to_string(e.num_chains_after);
}

}  // namespace aptrbm
