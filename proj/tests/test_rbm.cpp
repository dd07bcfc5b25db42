#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <cstring>
#include <sstream>

#include "aptrbm/rbm.hpp"
#include "aptrbm/rbm_io.hpp"
#include "oracles.hpp"

using namespace aptrbm;

namespace {

RbmParams one_by_one(double w, double b, double c) {
  RbmParams p = RbmParams::zeros(1, 1);
  p.weights(0, 0) = w;
  p.hidden_bias[0] = b;
  p.visible_bias[0] = c;
  return p;
}

JointState state(std::initializer_list<double> v, std::initializer_list<double> h) {
  JointState s;
  s.visible = Eigen::Map<const Vector>(std::data(v), static_cast<Eigen::Index>(v.size()));
  s.hidden = Eigen::Map<const Vector>(std::data(h), static_cast<Eigen::Index>(h.size()));
  return s;
}

}  // namespace

TEST(Energy, ZeroParamsGiveZero) {
  const auto p = RbmParams::zeros(3, 2);
  EXPECT_EQ(energy(p, state({1, 0, 1}, {1, 1})), 0.0);
}

TEST(Energy, ZeroStateGivesZero) {
  std::mt19937_64 rng(1);
  const auto p = oracle::random_params(3, 2, 2.0, rng);
  EXPECT_EQ(energy(p, state({0, 0, 0}, {0, 0})), 0.0);
}

TEST(Energy, HandEvaluatedOneByOne) {
  EXPECT_DOUBLE_EQ(energy(one_by_one(1.0, 0.5, -0.25), state({1}, {1})), -1.25);
}

TEST(Energy, LinearInParameters) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_params(4, 3, 1.5, rng);
    const auto b = oracle::random_params(4, 3, 1.5, rng);
    for (std::uint64_t code = 0; code < 128; ++code) {
      JointState x{oracle::bits(code & 15u, 4), oracle::bits(code >> 4, 3)};
      EXPECT_NEAR(energy(a + b, x), energy(a, x) + energy(b, x), 1e-12);
    }
  }
}

TEST(Energy, MatchesExplicitLoops) {
  std::mt19937_64 rng(3);
  const auto p = oracle::random_params(5, 4, 1.0, rng);
  for (std::uint64_t code = 0; code < 512; ++code) {
    const Vector v = oracle::bits(code & 31u, 5), h = oracle::bits(code >> 5, 4);
    EXPECT_NEAR(energy(p, {v, h}), oracle::energy(p, v, h), 1e-12);
  }
}

TEST(Energy, ShapeMismatchThrows) {
  auto p = RbmParams::zeros(3, 2);
  EXPECT_THROW(energy(p, state({1, 0}, {1, 1})), DimensionError);
  p.hidden_bias = Vector::Zero(3);
  EXPECT_THROW(energy(p, state({1, 0, 1}, {1, 1})), DimensionError);
}

TEST(Conditionals, InfiniteTemperatureIsUniform) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = oracle::random_params(6, 4, 10.0, rng);
    const Vector v = oracle::bits(rng() & 63u, 6), h = oracle::bits(rng() & 15u, 4);
    EXPECT_TRUE((hidden_conditional(p, v, 0.0).array() == 0.5).all());
    EXPECT_TRUE((visible_conditional(p, h, 0.0).array() == 0.5).all());
  }
}

TEST(Conditionals, ZeroParamsAtUnitBeta) {
  const auto p = RbmParams::zeros(3, 2);
  EXPECT_TRUE((hidden_conditional(p, Vector::Ones(3), 1.0).array() == 0.5).all());
  EXPECT_TRUE((visible_conditional(p, Vector::Ones(2), 1.0).array() == 0.5).all());
}

TEST(Conditionals, HiddenWorkedExample) {
  // enumeration oracle: tests/oracles/derive_values.py
  const auto p = one_by_one(2.0, -1.0, 0.0);
  EXPECT_NEAR(hidden_conditional(p, Vector::Ones(1), 0.5)[0], 0.6224593312018546, 1e-15);
}

TEST(Conditionals, VisibleWorkedExample) {
  const auto p = one_by_one(2.0, 0.0, 1.0);
  EXPECT_NEAR(visible_conditional(p, Vector::Ones(1), 1.0)[0], 0.9525741268224333, 1e-15);
}

TEST(Conditionals, MatchTwoStateEnumeration) {
  std::mt19937_64 rng(5);
  const auto p = oracle::random_params(3, 2, 2.0, rng);
  for (double beta : {0.0, 0.3, 1.0}) {
    for (std::uint64_t vc = 0; vc < 8; ++vc) {
      const Vector v = oracle::bits(vc, 3);
      const Vector probs = hidden_conditional(p, v, beta);
      for (Eigen::Index i = 0; i < 2; ++i) {
        // p(h_i=1|v) from the joint with the other hidden unit summed out
        double on = 0, total = 0;
        for (std::uint64_t hc = 0; hc < 4; ++hc) {
          const double w = std::exp(-beta * oracle::energy(p, v, oracle::bits(hc, 2)));
          total += w;
          if ((hc >> i) & 1u) on += w;
        }
        EXPECT_NEAR(probs[i], on / total, 1e-13);
      }
    }
  }
}

TEST(Gibbs, InfiniteTemperatureGivesFairCoins) {
  std::mt19937_64 prng(6);
  const auto p = oracle::random_params(4, 3, 8.0, prng);
  Rng rng(7);
  JointState s{Vector::Zero(4), Vector::Zero(3)};
  Vector ones_v = Vector::Zero(4), ones_h = Vector::Zero(3);
  const int n = 200000;
  for (int t = 0; t < n; ++t) {
    s = gibbs_step(p, s, 0.0, rng);
    ones_v += s.visible;
    ones_h += s.hidden;
  }
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_NEAR(ones_v[j] / n, 0.5, 0.005);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(ones_h[i] / n, 0.5, 0.005);
}

TEST(Gibbs, StrongCouplingMatchesExactConditionals) {
  // 1x1 RBM with large +-K coupling: compare empirical transition
  // frequencies with the exactly computed conditionals.
  for (double k : {12.0, -12.0}) {
    const auto p = one_by_one(k, -k / 2, -k / 2);
    Rng rng(8);
    const int n = 100000;
    int agree = 0;
    JointState s{Vector::Ones(1), Vector::Zero(1)};
    for (int t = 0; t < n; ++t) {
      const double v_before = s.visible[0];
      s = gibbs_step(p, s, 1.0, rng);
      if (s.hidden[0] == v_before) ++agree;
    }
    const double expected = 1.0 / (1.0 + std::exp(-std::abs(k) / 2));
    const double freq = static_cast<double>(agree) / n;
    if (k > 0) EXPECT_NEAR(freq, expected, 0.002);
    else EXPECT_NEAR(1.0 - freq, expected, 0.002);
    EXPECT_GT(k > 0 ? freq : 1.0 - freq, 0.99);
  }
}

TEST(Gibbs, StationaryDistributionMatchesEnumeration) {
  std::mt19937_64 prng(9);
  const auto p = oracle::random_params(4, 3, 0.5, prng);
  for (double beta : {1.0, 0.5}) {
    const auto exact = oracle::joint_distribution(p, beta);
    std::vector<double> counts(exact.size(), 0.0);
    Rng rng(10);
    JointState s{Vector::Zero(4), Vector::Zero(3)};
    const int n = 1000000;
    for (int t = 0; t < n; ++t) {
      gibbs_update(p, s, beta, rng);
      counts[oracle::code_of(s.visible) * 8 + oracle::code_of(s.hidden)] += 1.0;
    }
    for (auto& c : counts) c /= n;
    EXPECT_LT(oracle::total_variation(counts, exact), 0.01) << "beta=" << beta;
  }
}

TEST(SufficientStats, ZeroVisible) {
  const auto g = sufficient_stats(Vector::Zero(3), Vector::Constant(2, 0.7));
  EXPECT_TRUE(g.weight_stats.isZero());
  EXPECT_TRUE(g.visible_stats.isZero());
  EXPECT_TRUE(g.hidden_stats.isApproxToConstant(0.7));
}

TEST(SufficientStats, IdentityCase) {
  const auto g = sufficient_stats(Vector::Ones(1), Vector::Ones(1));
  EXPECT_EQ(g.weight_stats(0, 0), 1.0);
  EXPECT_EQ(g.hidden_stats[0], 1.0);
  EXPECT_EQ(g.visible_stats[0], 1.0);
}

TEST(SufficientStats, OuterProduct) {
  Vector v(2);
  v << 1, 0;
  const auto g = sufficient_stats(v, Vector::Constant(1, 0.5));
  ASSERT_EQ(g.weight_stats.rows(), 1);
  ASSERT_EQ(g.weight_stats.cols(), 2);
  EXPECT_EQ(g.weight_stats(0, 0), 0.5);
  EXPECT_EQ(g.weight_stats(0, 1), 0.0);
}

TEST(LogPartition, ZeroParams) {
  const auto p = RbmParams::zeros(5, 3);
  EXPECT_NEAR(exact_log_partition(p, 1.0), 8 * std::log(2.0), 1e-12);
}

TEST(LogPartition, InfiniteTemperature) {
  std::mt19937_64 rng(11);
  const auto p = oracle::random_params(5, 3, 3.0, rng);
  EXPECT_NEAR(exact_log_partition(p, 0.0), 8 * std::log(2.0), 1e-12);
}

TEST(LogPartition, MatchesBruteForceFiveByFour) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = oracle::random_params(5, 4, 2.0, rng);
    for (double beta : {1.0, 0.37}) {
      const double expected = oracle::log_partition(p, beta);
      EXPECT_NEAR(exact_log_partition(p, beta), expected, 1e-10 * std::abs(expected));
    }
  }
}

TEST(LogPartition, BothEnumerationOrientationsAgree) {
  std::mt19937_64 rng(13);
  for (auto [nv, nh] : {std::pair{7, 3}, std::pair{3, 7}, std::pair{9, 9}}) {
    const auto p = oracle::random_params(nv, nh, 1.5, rng);
    const double over_h = exact_log_partition(p, 1.0, {25, Enumerate::kHidden});
    const double over_v = exact_log_partition(p, 1.0, {25, Enumerate::kVisible});
    EXPECT_NEAR(over_h, over_v, 1e-10 * std::abs(over_v));
  }
}

TEST(LogPartition, GrayCodeRefreshPathStaysExact) {
  // 14 enumerated units crosses several periodic refreshes
  std::mt19937_64 rng(14);
  const auto p = oracle::random_params(14, 14, 0.8, rng);
  const double over_h = exact_log_partition(p, 1.0, {25, Enumerate::kHidden});
  const double over_v = exact_log_partition(p, 1.0, {25, Enumerate::kVisible});
  EXPECT_NEAR(over_h, over_v, 1e-10 * std::abs(over_v));
}

TEST(LogPartition, LargeWeightsDoNotOverflow) {
  std::mt19937_64 rng(15);
  const auto p = oracle::random_params(6, 4, 300.0, rng);
  const double lz = exact_log_partition(p, 1.0);
  EXPECT_TRUE(std::isfinite(lz));
  EXPECT_NEAR(lz, oracle::log_partition(p, 1.0), 1e-10 * std::abs(lz));
}

TEST(LogPartition, CapExceededIsAnError) {
  const auto p = RbmParams::zeros(30, 30);
  EXPECT_THROW(exact_log_partition(p, 1.0), IntractableError);
  EXPECT_THROW(exact_log_partition(RbmParams::zeros(12, 12), 1.0, {10, Enumerate::kAuto}), IntractableError);
  EXPECT_NO_THROW(exact_log_partition(RbmParams::zeros(784, 10), 1.0));
}

TEST(LogLikelihood, UniformModel) {
  const auto p = RbmParams::zeros(6, 3);
  BinaryMatrix data(6, 2);
  data << 1, 0, 0, 1, 1, 1, 0, 0, 1, 0, 0, 1;
  EXPECT_NEAR(exact_log_likelihood(p, data), -6 * std::log(2.0), 1e-12);
}

TEST(LogLikelihood, MatchesBruteForceSingleExample) {
  std::mt19937_64 rng(16);
  const auto p = oracle::random_params(3, 2, 2.0, rng);
  for (std::uint64_t vc = 0; vc < 8; ++vc) {
    const Vector v = oracle::bits(vc, 3);
    EXPECT_NEAR(exact_log_likelihood(p, BinaryMatrix(v)), oracle::log_prob_visible(p, v), 1e-10);
  }
}

TEST(LogLikelihood, InvariantUnderHiddenPermutation) {
  std::mt19937_64 rng(17);
  const auto p = oracle::random_params(5, 4, 2.0, rng);
  BinaryMatrix data(5, 6);
  for (Eigen::Index c = 0; c < 6; ++c) data.col(c) = oracle::bits(rng() & 31u, 5);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  RbmParams q = p;
  q.weights = perm * p.weights;
  q.hidden_bias = perm * p.hidden_bias;
  EXPECT_NEAR(exact_log_likelihood(p, data), exact_log_likelihood(q, data), 1e-12);
}

TEST(LogLikelihood, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = oracle::random_params(4, 3, 1.0, rng);
    const Vector v = oracle::bits(rng() & 15u, 4);
    const auto grad = oracle::log_likelihood_gradient(p, v);
    const double step = 1e-5;
    std::vector<double> fd;
    auto perturbed = [&](std::size_t k, double delta) {
      RbmParams q = p;
      const auto nw = static_cast<std::size_t>(q.weights.size()), nh = static_cast<std::size_t>(q.num_hidden());
      if (k < nw) q.weights(static_cast<Eigen::Index>(k / 4), static_cast<Eigen::Index>(k % 4)) += delta;
      else if (k < nw + nh) q.hidden_bias[static_cast<Eigen::Index>(k - nw)] += delta;
      else q.visible_bias[static_cast<Eigen::Index>(k - nw - nh)] += delta;
      return exact_log_likelihood(q, BinaryMatrix(v));
    };
    double diff = 0, norm = 0;
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double d = (perturbed(k, step) - perturbed(k, -step)) / (2 * step);
      diff += (d - grad[k]) * (d - grad[k]);
      norm += grad[k] * grad[k];
    }
    EXPECT_LE(std::sqrt(diff / norm), 1e-6);
  }
}

TEST(Serialization, BinarySnapshotLayout) {
  RbmParams p = RbmParams::zeros(3, 2);
  p.weights << 1, 2, 3, 4, 5, 6;
  p.hidden_bias << 7, 8;
  p.visible_bias << 9, 10, 11;
  std::stringstream ss;
  write_params_binary(ss, p);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 16u + 11u * 8u);
  std::uint64_t dims[2];
  std::memcpy(dims, bytes.data(), 16);
  EXPECT_EQ(dims[0], 3u);
  EXPECT_EQ(dims[1], 2u);
  double values[11];
  std::memcpy(values, bytes.data() + 16, sizeof values);
  for (int k = 0; k < 11; ++k) EXPECT_EQ(values[k], k + 1.0);
}

TEST(Serialization, RoundTripsPreserveEveryBit) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = oracle::random_params(1 + static_cast<Eigen::Index>(rng() % 9), 1 + static_cast<Eigen::Index>(rng() % 5), 3.0, rng);
    std::stringstream ss;
    write_params_binary(ss, p);
    EXPECT_EQ(read_params_binary(ss), p);
    EXPECT_EQ(params_from_json(nlohmann::json::parse(params_to_json(p).dump())), p);
  }
}

TEST(Serialization, TruncatedSnapshotThrows) {
  std::stringstream ss;
  write_params_binary(ss, RbmParams::zeros(4, 2));
  std::string bytes = ss.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_params_binary(cut), std::runtime_error);
}
