#pragma once

// Binary {0,1} restricted Boltzmann machine: energy, tempered conditionals,
// block Gibbs transitions and exact partition-function evaluation for models
// whose smaller layer can be enumerated.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "aptrbm/random.hpp"

namespace aptrbm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Examples stored one per column (num_visible x count).
using BinaryMatrix = Eigen::MatrixXd;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IntractableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradStats;

struct RbmParams {
  Matrix weights;      // num_hidden x num_visible
  Vector hidden_bias;  // b
  Vector visible_bias; // c

  static RbmParams zeros(Eigen::Index num_visible, Eigen::Index num_hidden) {
    return {Matrix::Zero(num_hidden, num_visible), Vector::Zero(num_hidden),
            Vector::Zero(num_visible)};
  }

  Eigen::Index num_visible() const { return visible_bias.size(); }
  Eigen::Index num_hidden() const { return hidden_bias.size(); }

  void check_shapes() const {
    if (weights.rows() != hidden_bias.size() || weights.cols() != visible_bias.size()) {
      throw DimensionError("RbmParams: weights are " + std::to_string(weights.rows()) + "x" +
                           std::to_string(weights.cols()) + " but biases have lengths " +
                           std::to_string(hidden_bias.size()) + "/" +
                           std::to_string(visible_bias.size()));
    }
  }

  bool all_finite() const {
    return weights.allFinite() && hidden_bias.allFinite() && visible_bias.allFinite();
  }

  double max_abs() const {
    double m = 0.0;
    if (weights.size() > 0) m = std::max(m, weights.cwiseAbs().maxCoeff());
    if (hidden_bias.size() > 0) m = std::max(m, hidden_bias.cwiseAbs().maxCoeff());
    if (visible_bias.size() > 0) m = std::max(m, visible_bias.cwiseAbs().maxCoeff());
    return m;
  }

  RbmParams& operator+=(const RbmParams& other) {
    weights += other.weights;
    hidden_bias += other.hidden_bias;
    visible_bias += other.visible_bias;
    return *this;
  }

  friend RbmParams operator+(RbmParams a, const RbmParams& b) { return a += b; }
  friend bool operator==(const RbmParams& a, const RbmParams& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           a.hidden_bias.size() == b.hidden_bias.size() &&
           a.visible_bias.size() == b.visible_bias.size() && a.weights == b.weights &&
           a.hidden_bias == b.hidden_bias && a.visible_bias == b.visible_bias;
  }
};

struct JointState {
  Vector visible;
  Vector hidden;

  friend bool operator==(const JointState& a, const JointState& b) {
    return a.visible.size() == b.visible.size() && a.hidden.size() == b.hidden.size() &&
           a.visible == b.visible && a.hidden == b.hidden;
  }
};

// phi(v, h) = (h v^T, h, v), the sufficient statistics of the log-linear form.
struct GradStats {
  Matrix weight_stats;
  Vector hidden_stats;
  Vector visible_stats;

  static GradStats zeros(Eigen::Index num_visible, Eigen::Index num_hidden) {
    return {Matrix::Zero(num_hidden, num_visible), Vector::Zero(num_hidden),
            Vector::Zero(num_visible)};
  }

  GradStats& operator+=(const GradStats& o) {
    weight_stats += o.weight_stats;
    hidden_stats += o.hidden_stats;
    visible_stats += o.visible_stats;
    return *this;
  }
  GradStats& operator-=(const GradStats& o) {
    weight_stats -= o.weight_stats;
    hidden_stats -= o.hidden_stats;
    visible_stats -= o.visible_stats;
    return *this;
  }
  GradStats& operator*=(double s) {
    weight_stats *= s;
    hidden_stats *= s;
    visible_stats *= s;
    return *this;
  }
  friend GradStats operator-(GradStats a, const GradStats& b) { return a -= b; }
};

namespace detail {

inline void require_length(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) +
                         ", got " + std::to_string(v.size()));
  }
}

// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline Vector logistic(const Vector& activation) {
  return (1.0 + (-activation.array()).exp()).inverse().matrix();
}

template <typename Engine>
inline void sample_bits(const Vector& probs, Vector& out, Engine& rng) {
  out.resize(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) out[i] = bernoulli(rng, probs[i]) ? 1.0 : 0.0;
}

// Running log-sum-exp accumulator.
class LogSumExp {
 public:
  void add(double x) {
    if (x == -std::numeric_limits<double>::infinity()) return;
    if (x > max_) {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    } else {
      sum_ += std::exp(x - max_);
    }
  }
  double value() const {
    if (sum_ == 0.0) return -std::numeric_limits<double>::infinity();
    return max_ + std::log(sum_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

}  // namespace detail

inline double energy(const RbmParams& params, const JointState& state) {
  params.check_shapes();
  detail::require_length(state.visible, params.num_visible(), "energy(visible)");
  detail::require_length(state.hidden, params.num_hidden(), "energy(hidden)");
  return -(state.hidden.dot(params.weights * state.visible) +
           params.hidden_bias.dot(state.hidden) + params.visible_bias.dot(state.visible));
}

// p_beta(h_i = 1 | v) for every hidden unit.
inline Vector hidden_conditional(const RbmParams& params, const Vector& visible, double beta) {
  detail::require_length(visible, params.num_visible(), "hidden_conditional");
  return detail::logistic(beta * (params.hidden_bias + params.weights * visible));
}

// p_beta(v_j = 1 | h) for every visible unit.
inline Vector visible_conditional(const RbmParams& params, const Vector& hidden, double beta) {
  detail::require_length(hidden, params.num_hidden(), "visible_conditional");
  return detail::logistic(beta * (params.visible_bias + params.weights.transpose() * hidden));
}

// One alternation h ~ p_beta(h|v), v ~ p_beta(v|h), in place.
template <typename Engine>
inline void gibbs_update(const RbmParams& params, JointState& state, double beta, Engine& rng) {
  detail::sample_bits(hidden_conditional(params, state.visible, beta), state.hidden, rng);
  detail::sample_bits(visible_conditional(params, state.hidden, beta), state.visible, rng);
}

template <typename Engine>
inline JointState gibbs_step(const RbmParams& params, const JointState& state, double beta,
                             Engine& rng) {
  JointState next = state;
  gibbs_update(params, next, beta, rng);
  return next;
}

inline GradStats sufficient_stats(const Vector& visible, const Vector& hidden_probs) {
  return {hidden_probs * visible.transpose(), hidden_probs, visible};
}

enum class Enumerate { kAuto, kHidden, kVisible };

struct ExactOptions {
  int max_enumerated_units = 25;
  Enumerate layer = Enumerate::kAuto;
};

// log Z(beta) by enumerating one layer and summing the other out analytically.
inline double exact_log_partition(const RbmParams& params, double beta,
                                  const ExactOptions& options = {}) {
  params.check_shapes();
  Enumerate layer = options.layer;
  if (layer == Enumerate::kAuto) {
    layer = params.num_hidden() <= params.num_visible() ? Enumerate::kHidden : Enumerate::kVisible;
  }
  const bool over_hidden = layer == Enumerate::kHidden;
  const Eigen::Index n = over_hidden ? params.num_hidden() : params.num_visible();
  if (n > options.max_enumerated_units || n > 62) {
    throw IntractableError("exact_log_partition: enumerating " + std::to_string(n) +
                           " units exceeds the cap of " +
                           std::to_string(options.max_enumerated_units));
  }

  // rows(k) is the coupling vector of enumerated unit k into the other layer.
  const Matrix rows = over_hidden ? Matrix(params.weights) : Matrix(params.weights.transpose());
  const Vector& own_bias = over_hidden ? params.hidden_bias : params.visible_bias;
  const Vector& other_bias = over_hidden ? params.visible_bias : params.hidden_bias;

  detail::LogSumExp acc;
  const std::uint64_t count = std::uint64_t{1} << n;
  Vector activation = other_bias;
  double linear = 0.0;
  std::uint64_t gray = 0;
  for (std::uint64_t k = 0; k < count; ++k) {
    if (k > 0) {
      const int flip = std::countr_zero(k);
      gray ^= std::uint64_t{1} << flip;
      if ((k & 4095u) == 0) {
        // periodic refresh keeps incremental round-off bounded
        activation = other_bias;
        linear = 0.0;
        for (Eigen::Index u = 0; u < n; ++u) {
          if ((gray >> u) & 1u) {
            activation += rows.row(u).transpose();
            linear += own_bias[u];
          }
        }
      } else if ((gray >> flip) & 1u) {
        activation += rows.row(flip).transpose();
        linear += own_bias[flip];
      } else {
        activation -= rows.row(flip).transpose();
        linear -= own_bias[flip];
      }
    }
    double term = beta * linear;
    for (Eigen::Index j = 0; j < activation.size(); ++j) term += detail::softplus(beta * activation[j]);
    acc.add(term);
  }
  return acc.value();
}

// log sum_h exp(-E(v, h)) at beta = 1.
inline double log_unnormalized_marginal(const RbmParams& params, const Vector& visible) {
  detail::require_length(visible, params.num_visible(), "log_unnormalized_marginal");
  const Vector act = params.hidden_bias + params.weights * visible;
  double total = params.visible_bias.dot(visible);
  for (Eigen::Index i = 0; i < act.size(); ++i) total += detail::softplus(act[i]);
  return total;
}

// Mean exact log p(v) over the columns of data.
inline double exact_log_likelihood(const RbmParams& params, const BinaryMatrix& data,
                                   const ExactOptions& options = {}) {
  params.check_shapes();
  if (data.rows() != params.num_visible()) {
    throw DimensionError("exact_log_likelihood: data has " + std::to_string(data.rows()) +
                         " rows, model has " + std::to_string(params.num_visible()) +
                         " visible units");
  }
  if (data.cols() == 0) throw std::invalid_argument("exact_log_likelihood: empty dataset");
  const double log_z = exact_log_partition(params, 1.0, options);
  const Matrix act = (params.weights * data).colwise() + params.hidden_bias;
  double total = (params.visible_bias.transpose() * data).sum();
  for (Eigen::Index c = 0; c < act.cols(); ++c) {
    for (Eigen::Index r = 0; r < act.rows(); ++r) total += detail::softplus(act(r, c));
  }
  return total / static_cast<double>(data.cols()) - log_z;
}

}  // namespace aptrbm
