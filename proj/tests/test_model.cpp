#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cascade/model.hpp"
#include "cascade/region.hpp"
#include "oracle.hpp"

using namespace cascade;

TEST(Entropy, UniformBinaryIsOneBit) {
  const double p[] = {0.5, 0.5};
  EXPECT_DOUBLE_EQ(entropy(p), 1.0);
}

TEST(Entropy, PointMassIsZero) {
  const double p[] = {0.0, 1.0, 0.0};
  EXPECT_EQ(entropy(p), 0.0);
}

TEST(Entropy, MatchesFrozenValue) {
  const double p[] = {0.11, 0.89};
  EXPECT_NEAR(entropy(p), oracle::kH011, 1e-12);
}

TEST(Entropy, RejectsInvalidPmf) {
  const double bad_sum[] = {0.5, 0.6};
  const double negative[] = {1.2, -0.2};
  EXPECT_THROW(entropy(bad_sum), ValidationError);
  EXPECT_THROW(entropy(negative), ValidationError);
  EXPECT_THROW(entropy(std::span<const double>{}), ValidationError);
}

TEST(Entropy, TinyMassesCountAsZero) {
  const double p[] = {1e-17, 1.0 - 1e-17};
  EXPECT_EQ(entropy(p), 0.0);
}

TEST(BinaryEntropy, KnownValues) {
  EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
  EXPECT_EQ(binary_entropy(0.0), 0.0);
  EXPECT_EQ(binary_entropy(1.0), 0.0);
  EXPECT_NEAR(binary_entropy(0.11), oracle::kH011, 1e-12);
}

TEST(BinaryEntropy, SymmetricAndValidated) {
  for (double p = 0.0; p <= 1.0; p += 0.01) EXPECT_NEAR(binary_entropy(p), binary_entropy(1.0 - p), 1e-12);
  EXPECT_THROW(binary_entropy(-0.1), ValidationError);
  EXPECT_THROW(binary_entropy(1.5), ValidationError);
}

TEST(MutualInformation, IndependentIsZero) {
  const Distribution d({2, 3}, {0.1, 0.2, 0.2, 0.1, 0.2, 0.2});
  EXPECT_NEAR(mutual_information(d), 0.0, 1e-12);
}

TEST(MutualInformation, IdenticalBinaryIsOneBit) {
  const Distribution d({2, 2}, {0.5, 0.0, 0.0, 0.5});
  EXPECT_NEAR(mutual_information(d), 1.0, 1e-12);
}

TEST(MutualInformation, DoublySymmetricSource) {
  const double p = 0.11;
  const Distribution d({2, 2}, {(1 - p) / 2, p / 2, p / 2, (1 - p) / 2});
  EXPECT_NEAR(mutual_information(d), 1.0 - oracle::kH011, 1e-12);
}

TEST(MutualInformation, RequiresTwoVariables) {
  const Distribution d({2, 1, 2}, {0.25, 0.25, 0.25, 0.25});
  EXPECT_THROW(mutual_information(d), ValidationError);
}

TEST(Distribution, ValidatesShapeAndMass) {
  EXPECT_THROW(Distribution({2, 2}, {0.5, 0.5}), ValidationError);
  EXPECT_THROW(Distribution({2, 0}, {}), ValidationError);
  EXPECT_THROW(Distribution({2}, {0.7, 0.7}), ValidationError);
  EXPECT_THROW(Distribution({}, {1.0}), ValidationError);
}

TEST(Distribution, MarginalReordersVariables) {
  std::mt19937_64 rng(3);
  const auto p = oracle::random_pmf(rng, 2 * 3 * 4);
  const Distribution d({2, 3, 4}, p);
  const std::size_t keep[] = {2, 0};
  const Distribution m = d.marginal(keep);
  ASSERT_EQ(m.shape(), (std::vector<std::size_t>{4, 2}));
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t x = 0; x < 2; ++x) {
      double expect = 0.0;
      for (std::size_t y = 0; y < 3; ++y) expect += p[(x * 3 + y) * 4 + z];
      EXPECT_NEAR(m.values()[z * 2 + x], expect, 1e-15);
    }
}

TEST(ConditionalMutualInformation, EmptyConditioningReducesToMutualInformation) {
  std::mt19937_64 rng(5);
  const Distribution d({3, 2, 2}, oracle::random_pmf(rng, 12));
  const std::size_t a[] = {0}, b[] = {2};
  const std::size_t keep[] = {0, 2};
  EXPECT_NEAR(conditional_mutual_information(d, a, b), mutual_information(d.marginal(keep)), 1e-12);
}

TEST(ConditionalMutualInformation, MarkovChainGivesZero) {
  // A - C - B: p(c) p(a|c) p(b|c), variables ordered (A, B, C).
  std::mt19937_64 rng(7);
  const auto pc = oracle::random_pmf(rng, 3);
  const auto ac = oracle::random_kernel(rng, 3, 2);
  const auto bc = oracle::random_kernel(rng, 3, 4);
  std::vector<double> p(2 * 4 * 3);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t c = 0; c < 3; ++c) p[(a * 4 + b) * 3 + c] = pc[c] * ac[c * 2 + a] * bc[c * 4 + b];
  const Distribution d({2, 4, 3}, p);
  const std::size_t A[] = {0}, B[] = {1}, C[] = {2};
  EXPECT_NEAR(conditional_mutual_information(d, A, B, C), 0.0, 1e-12);
}

TEST(ConditionalMutualInformation, KornerMartonBinning) {
  // (X, Y, U, V) with U trivial and V = X: I(X;V|Y) = H(X|Y) = h(0.11).
  const double p = 0.11;
  const Distribution d({2, 2, 1, 2}, {(1 - p) / 2, 0, p / 2, 0, 0, p / 2, 0, (1 - p) / 2});
  const std::size_t X[] = {0}, V[] = {3}, Y[] = {1};
  EXPECT_NEAR(conditional_mutual_information(d, X, V, Y), oracle::kH011, 1e-12);
}

TEST(ConditionalMutualInformation, RejectsOverlappingOrBadIndices) {
  const Distribution d({2, 2}, {0.25, 0.25, 0.25, 0.25});
  const std::size_t a[] = {0}, b[] = {0, 1}, far[] = {5};
  EXPECT_THROW(conditional_mutual_information(d, a, b), ValidationError);
  EXPECT_THROW(conditional_mutual_information(d, a, far), ValidationError);
}

TEST(ConditionalMutualInformation, AgreesWithDirectSummation) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = oracle::random_pmf(rng, 2 * 3 * 2 * 2);
    const Distribution d({2, 3, 2, 2}, p);
    oracle::Joint j;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 2; ++c)
          for (int e = 0; e < 2; ++e) j[{a, b, c, e}] = p[((a * 3 + b) * 2 + c) * 2 + e];
    const std::size_t A[] = {0, 3}, B[] = {1}, C[] = {2};
    EXPECT_NEAR(conditional_mutual_information(d, A, B, C), oracle::cmi(j, {0, 3}, {1}, {2}), 1e-12);
  }
}

// Chain rule I(X;U,V|Y) = I(X;U|Y) + I(X;V|Y,U) on random (X, Y, U, V) joints.
TEST(InformationProperties, ChainRule) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const Distribution d({3, 2, 3, 2}, oracle::random_pmf(rng, 36));
    const std::size_t X[] = {0}, Y[] = {1}, U[] = {2}, V[] = {3}, UV[] = {2, 3}, YU[] = {1, 2};
    const double lhs = conditional_mutual_information(d, X, UV, Y);
    const double rhs = conditional_mutual_information(d, X, U, Y) + conditional_mutual_information(d, X, V, YU);
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(InformationProperties, NonNegativeOnRandomPmfs) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> size(1, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t a = size(rng), b = size(rng), c = size(rng);
    // Sparse pmfs exercise the zero-mass paths.
    auto p = oracle::random_pmf(rng, a * b * c);
    for (auto& v : p)
      if (v < 0.3 / static_cast<double>(p.size())) v = 0.0;
    double total = 0.0;
    for (double v : p) total += v;
    if (total == 0.0) continue;
    for (auto& v : p) v /= total;
    const Distribution d({a, b, c}, p);
    const std::size_t A[] = {0}, B[] = {1}, C[] = {2};
    EXPECT_GE(d.entropy(), 0.0);
    EXPECT_GE(conditional_mutual_information(d, A, B, C), 0.0);
    EXPECT_GE(conditional_mutual_information(d, A, B), 0.0);
    EXPECT_LE(d.entropy(), std::log2(static_cast<double>(a * b * c)) + 1e-12);
  }
}

TEST(InformationProperties, EntropyPermutationInvariant) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = oracle::random_pmf(rng, 7);
    const double h = entropy(p);
    std::shuffle(p.begin(), p.end(), rng);
    EXPECT_NEAR(entropy(p), h, 1e-12);
  }
}

TEST(JointSource, ValidatesAndIndexes) {
  const JointSource s(2, 3, {0.1, 0.2, 0.1, 0.3, 0.2, 0.1});
  EXPECT_DOUBLE_EQ(s(1, 0), 0.3);
  EXPECT_THROW(JointSource(2, 2, {0.5, 0.5}), ValidationError);
  EXPECT_THROW(JointSource(2, 1, {0.5, 0.6}), ValidationError);
  EXPECT_THROW(JointSource(0, 1, {}), ValidationError);
}

TEST(DistortionFn, ValidatesEntries) {
  EXPECT_THROW(DistortionFn(1, 1, 2, {0.0, -1.0}), ValidationError);
  EXPECT_THROW(DistortionFn(1, 1, 2, {0.0, std::nan("")}), ValidationError);
  EXPECT_THROW(DistortionFn(1, 1, 2, {0.0}), ValidationError);
}

TEST(DistortionFn, HammingToFunction) {
  const std::size_t f[] = {0, 1, 1, 0};
  const auto d = DistortionFn::hamming_to_function(2, 2, f);
  EXPECT_EQ(d.size_z(), 2u);
  EXPECT_EQ(d(0, 1, 1), 0.0);
  EXPECT_EQ(d(0, 1, 0), 1.0);
  EXPECT_EQ(d(1, 1, 0), 0.0);
}

TEST(RateDistortionTriple, RejectsNegativeCoordinates) {
  EXPECT_NO_THROW(make_triple(0, 0, 0));
  EXPECT_THROW(make_triple(-1e-3, 0, 0), ValidationError);
  EXPECT_THROW(make_triple(0, 0, std::nan("")), ValidationError);
}

TEST(GaussianPair, Validation) {
  EXPECT_THROW(GaussianPair(0, 1, 0), ValidationError);
  EXPECT_THROW(GaussianPair(1, -1, 0), ValidationError);
  EXPECT_THROW(GaussianPair(1, 1, 1.01), ValidationError);
  EXPECT_NO_THROW(GaussianPair(1, 1, -1));
}
