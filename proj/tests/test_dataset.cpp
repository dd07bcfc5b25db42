#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "aptrbm/dataset.hpp"
#include "oracles.hpp"

using namespace aptrbm;

namespace {

MixtureSpec two_component_spec(double p1, double p2) {
  MixtureSpec s;
  Vector a(4), b(4);
  a << 1, 0, 1, 0;
  b << 0, 0, 1, 1;
  s.prototypes = {a, b};
  s.weights = {0.3, 0.7};
  s.flip_probs = {p1, p2};
  s.image_side = 2;
  return s;
}

}  // namespace

TEST(Dataset, StandardSpecConstants) {
  const auto s = standard_spec_from_seed(7, 28);
  ASSERT_EQ(s.prototypes.size(), 5u);
  EXPECT_EQ(s.num_pixels(), 784);
  const std::vector<double> w{0.3314, 0.2262, 0.0812, 0.0254, 0.3358};
  for (std::size_t m = 0; m < 5; ++m) EXPECT_NEAR(s.weights[m], w[m], 1e-12);
  EXPECT_EQ(s.flip_probs, (std::vector<double>{0.0001, 0.0137, 0.0215, 0.0223, 0.0544}));
  EXPECT_NEAR(std::accumulate(s.weights.begin(), s.weights.end(), 0.0), 1.0, 1e-12);
  s.validate();
}

TEST(Dataset, PrototypesAreFairCoinImages) {
  const auto s = standard_spec_from_seed(8, 28);
  double ones = 0;
  for (const auto& y : s.prototypes) ones += y.sum();
  EXPECT_NEAR(ones / (5 * 784), 0.5, 0.03);
}

TEST(Dataset, SpecIsReproducibleFromSeed) {
  const auto a = standard_spec_from_seed(9, 8), b = standard_spec_from_seed(9, 8), c = standard_spec_from_seed(10, 8);
  for (std::size_t m = 0; m < 5; ++m) EXPECT_EQ(a.prototypes[m], b.prototypes[m]);
  bool differs = false;
  for (std::size_t m = 0; m < 5; ++m) differs |= a.prototypes[m] != c.prototypes[m];
  EXPECT_TRUE(differs);
}

TEST(Dataset, NoiseFreeSamplesAreExactPrototypes) {
  auto s = two_component_spec(0.0, 0.0);
  Rng rng(11);
  for (int t = 0; t < 1000; ++t) {
    const Vector v = sample(s, rng);
    EXPECT_TRUE(v == s.prototypes[0] || v == s.prototypes[1]);
  }
}

TEST(Dataset, SingleComponentAlwaysChosen) {
  auto s = two_component_spec(0.1, 0.1);
  s.weights = {0.0, 1.0};
  Rng rng(12);
  for (int t = 0; t < 10000; ++t) EXPECT_EQ(sample_component(s, rng), 1u);
}

TEST(Dataset, ComponentFrequencies) {
  const auto s = standard_spec_from_seed(13, 4);
  Rng rng(14);
  std::vector<double> freq(5, 0.0);
  const int n = 100000;
  for (int t = 0; t < n; ++t) freq[sample_component(s, rng)] += 1.0 / n;
  for (std::size_t m = 0; m < 5; ++m) EXPECT_NEAR(freq[m], s.weights[m], 0.01);
}

TEST(Dataset, EmpiricalDistributionMatchesMixtureDensity) {
  const auto s = two_component_spec(0.1, 0.25);
  std::vector<double> exact(16);
  for (std::uint64_t c = 0; c < 16; ++c) exact[c] = std::exp(mixture_log_likelihood(s, oracle::bits(c, 4)));
  EXPECT_NEAR(std::accumulate(exact.begin(), exact.end(), 0.0), 1.0, 1e-12);
  Rng rng(15);
  std::vector<double> freq(16, 0.0);
  const int n = 1000000;
  for (int t = 0; t < n; ++t) freq[oracle::code_of(sample(s, rng))] += 1.0 / n;
  EXPECT_LT(oracle::total_variation(freq, exact), 0.01);
}

TEST(Dataset, MixtureLogLikelihoodHandCases) {
  auto s = two_component_spec(0.0, 0.0);
  EXPECT_NEAR(mixture_log_likelihood(s, s.prototypes[0]), std::log(0.3), 1e-15);
  Vector far(4);
  far << 1, 1, 0, 0;
  EXPECT_EQ(mixture_log_likelihood(s, far), -INFINITY);
  s = two_component_spec(0.5, 0.5);
  EXPECT_NEAR(mixture_log_likelihood(s, far), 4 * std::log(0.5), 1e-14);
  s = two_component_spec(0.1, 0.2);
  // one mismatch against each prototype
  Vector v(4);
  v << 1, 0, 1, 1;
  const double expected = std::log(0.3 * 0.1 * std::pow(0.9, 3) + 0.7 * 0.2 * std::pow(0.8, 3));
  EXPECT_NEAR(mixture_log_likelihood(s, v), expected, 1e-14);
}

TEST(Dataset, PixelPermutationIsEquivariant) {
  const auto s = two_component_spec(0.05, 0.2);
  const std::vector<int> perm{2, 0, 3, 1};
  MixtureSpec t = s;
  for (auto& y : t.prototypes) {
    Vector z(4);
    for (int j = 0; j < 4; ++j) z[perm[j]] = y[j];
    y = z;
  }
  for (std::uint64_t c = 0; c < 16; ++c) {
    const Vector v = oracle::bits(c, 4);
    Vector w(4);
    for (int j = 0; j < 4; ++j) w[perm[j]] = v[j];
    EXPECT_NEAR(mixture_log_likelihood(s, v), mixture_log_likelihood(t, w), 1e-14);
  }
}

TEST(Dataset, ValidationRejectsBadSpecs) {
  auto s = two_component_spec(0.1, 0.1);
  s.weights = {0.5, 0.6};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = two_component_spec(0.1, 0.6);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = two_component_spec(0.1, 0.1);
  s.prototypes[1][0] = 0.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = two_component_spec(0.1, 0.1);
  EXPECT_THROW(mixture_log_likelihood(s, Vector::Zero(3)), DimensionError);
}

TEST(Dataset, StreamIsDeterministic) {
  const auto s = standard_spec_from_seed(16, 4);
  MixtureStream a(s, make_stream(3, 2)), b(s, make_stream(3, 2)), c(s, make_stream(4, 2));
  const BinaryMatrix ba = a.next_batch(50), bb = b.next_batch(50), bc = c.next_batch(50);
  EXPECT_EQ(ba, bb);
  EXPECT_NE(ba, bc);
  EXPECT_EQ(ba.rows(), 16);
  EXPECT_EQ(ba.cols(), 50);
}

TEST(Dataset, JsonRoundTrip) {
  const auto s = standard_spec_from_seed(17, 5);
  const auto back = spec_from_json(nlohmann::json::parse(spec_to_json(s).dump()));
  EXPECT_EQ(back.weights, s.weights);
  EXPECT_EQ(back.flip_probs, s.flip_probs);
  EXPECT_EQ(back.image_side, 5);
  EXPECT_EQ(back.seed, 17u);
  for (std::size_t m = 0; m < 5; ++m) EXPECT_EQ(back.prototypes[m], s.prototypes[m]);
}

TEST(Dataset, SnapshotRoundTrip) {
  const auto s = standard_spec_from_seed(18, 3);
  Rng rng(19);
  const BinaryMatrix batch = sample_batch(s, 37, rng);
  std::stringstream buf;
  write_snapshot(buf, batch);
  EXPECT_EQ(buf.str().size(), 16u + 37u * 2u);
  EXPECT_EQ(read_snapshot(buf), batch);
}

TEST(Dataset, SnapshotBitLayout) {
  BinaryMatrix one(9, 1);
  one.setZero();
  one(0, 0) = 1;
  one(8, 0) = 1;
  std::stringstream buf;
  write_snapshot(buf, one);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 18u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 0x01);
  EXPECT_EQ(static_cast<unsigned char>(bytes[17]), 0x01);
}

TEST(Dataset, TruncatedSnapshotThrows) {
  std::stringstream buf;
  write_snapshot(buf, BinaryMatrix::Ones(8, 4));
  std::string bytes = buf.str();
  bytes.pop_back();
  std::stringstream cut(bytes);
  EXPECT_THROW(read_snapshot(cut), std::runtime_error);
}
