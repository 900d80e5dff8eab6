#include <gtest/gtest.h>

#include <random>

#include "cascade/region.hpp"
#include "oracle.hpp"

using namespace cascade;
using namespace cascade::region;

namespace {

JointSource dsbs(double p) { return JointSource(2, 2, {(1 - p) / 2, p / 2, p / 2, (1 - p) / 2}); }

const std::size_t kXor[4] = {0, 1, 1, 0};

AuxiliarySystem random_system(std::mt19937_64& rng, std::size_t nx, std::size_t ny, std::size_t nu, std::size_t nv,
                              std::size_t nz) {
  return AuxiliarySystem(nx, ny, nu, nv, nz, oracle::random_kernel(rng, nx, nu * nv),
                         oracle::random_kernel(rng, ny * nu * nv, nz));
}

oracle::Triple oracle_inner(const JointSource& s, const DistortionFn& d, const AuxiliarySystem& a) {
  const std::vector<double> pxy(s.pmf().begin(), s.pmf().end());
  const std::vector<double> uv(a.kernel_uv_given_x().begin(), a.kernel_uv_given_x().end());
  const std::vector<double> zk(a.kernel_z_given_yuv().begin(), a.kernel_z_given_yuv().end());
  const auto j = oracle::inner_joint(int(s.size_x()), int(s.size_y()), int(a.size_u()), int(a.size_v()),
                                     int(a.size_z()), pxy, uv, zk);
  return oracle::inner_rates(j, [&](int x, int y, int z) { return d(x, y, z); });
}

SearchBudget small_budget(std::uint64_t seed = 1) {
  SearchBudget b;
  b.restarts = 2;
  b.iterations = 600;
  b.seed = seed;
  b.automatic_slices = 3;
  return b;
}

}  // namespace

TEST(EvaluateInner, LosslessXorWitness) {
  // U trivial, V = X, Z = X xor Y.
  const auto s = dsbs(0.11);
  const auto d = DistortionFn::hamming_to_function(2, 2, kXor);
  std::vector<double> zk(2 * 2 * 2, 0.0);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t v = 0; v < 2; ++v) zk[(y * 2 + v) * 2 + (v ^ y)] = 1.0;
  const AuxiliarySystem aux(2, 2, 1, 2, 2, {1, 0, 0, 1}, zk);
  const auto t = evaluate_inner_point(s, d, aux);
  EXPECT_NEAR(t.r1, oracle::kH011, 1e-12);
  EXPECT_NEAR(t.r2, oracle::kH011, 1e-12);
  EXPECT_NEAR(t.d, 0.0, 1e-15);
}

TEST(EvaluateInner, TrivialSystemCostsNothing) {
  const auto s = dsbs(0.2);
  const DistortionFn d(2, 2, 2, {0, 1, 1, 0, 1, 0, 0, 1});
  const AuxiliarySystem aux(2, 2, 1, 1, 2, {1, 1}, {0.5, 0.5, 0.5, 0.5});
  const auto t = evaluate_inner_point(s, d, aux);
  EXPECT_NEAR(t.r1, 0.0, 1e-15);
  EXPECT_NEAR(t.r2, 0.0, 1e-15);
  EXPECT_NEAR(t.d, 0.5, 1e-15);
}

TEST(EvaluateInner, MatchesDirectSummation) {
  std::mt19937_64 rng(101);
  for (int k = 0; k < 100; ++k) {
    const std::size_t nx = 2 + k % 2, ny = 2 + (k / 2) % 2, nu = 1 + k % 3, nv = 1 + (k / 3) % 3, nz = 2 + k % 2;
    const JointSource s(nx, ny, oracle::random_pmf(rng, nx * ny));
    std::vector<double> table(nx * ny * nz);
    for (auto& v : table) v = std::uniform_real_distribution<double>(0, 2)(rng);
    const DistortionFn d(nx, ny, nz, table);
    const auto aux = random_system(rng, nx, ny, nu, nv, nz);
    const auto t = evaluate_inner_point(s, d, aux);
    const auto o = oracle_inner(s, d, aux);
    EXPECT_NEAR(t.r1, o.r1, 1e-10);
    EXPECT_NEAR(t.r2, o.r2, 1e-10);
    EXPECT_NEAR(t.d, o.d, 1e-12);
  }
}

TEST(EvaluateOuter, MatchesDirectSummation) {
  std::mt19937_64 rng(103);
  for (int k = 0; k < 100; ++k) {
    const std::size_t nx = 2 + k % 2, ny = 2, nu = 1 + k % 4, nz = 2 + k % 3;
    const JointSource s(nx, ny, oracle::random_pmf(rng, nx * ny));
    std::vector<double> table(nx * ny * nz);
    for (auto& v : table) v = std::uniform_real_distribution<double>(0, 1)(rng);
    const DistortionFn d(nx, ny, nz, table);
    const OuterSystem sys(nx, ny, nu, nz, oracle::random_kernel(rng, nx, nu), oracle::random_kernel(rng, ny * nu, nz));
    oracle::Joint j;  // (X, Y, U, Z)
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t u = 0; u < nu; ++u)
          for (std::size_t z = 0; z < nz; ++z)
            j[{int(x), int(y), int(u), int(z)}] += s(x, y) * sys.u_given_x(x, u) * sys.z_given_yu(y, u, z);
    const auto t = evaluate_outer_point(s, d, sys);
    EXPECT_NEAR(t.r1, oracle::cmi(j, {0}, {2}, {1}), 1e-10);
    EXPECT_NEAR(t.r2, oracle::cmi(j, {0, 1}, {3}), 1e-10);
    EXPECT_NEAR(t.d, oracle::expectation(j, [&](const oracle::Cell& c) { return d(c[0], c[1], c[3]); }), 1e-12);
  }
}

TEST(EvaluateInner, RejectsIncompatibleSystem) {
  const auto s = dsbs(0.1);
  const auto d = DistortionFn::hamming_to_function(2, 2, kXor);
  const AuxiliarySystem wrong_x(3, 2, 1, 1, 2, {1, 1, 1}, {0.5, 0.5, 0.5, 0.5});
  EXPECT_THROW(evaluate_inner_point(s, d, wrong_x), ValidationError);
  EXPECT_THROW(AuxiliarySystem(2, 2, 1, 1, 2, {1, 0.5}, {0.5, 0.5, 0.5, 0.5}), ValidationError);
}

// With V = X and Z a function of (Y, V): I(Y,V;Z) = H(Z) = I(X,Y;Z).
TEST(RegionProperties, DeterministicDecoderIdentity) {
  std::mt19937_64 rng(107);
  for (int k = 0; k < 30; ++k) {
    const std::size_t nx = 2 + k % 2, ny = 2 + (k / 2) % 2, nz = 2 + k % 3;
    const JointSource s(nx, ny, oracle::random_pmf(rng, nx * ny, 0.05));
    std::vector<double> uv(nx * nx, 0.0);
    for (std::size_t x = 0; x < nx; ++x) uv[x * nx + x] = 1.0;
    std::vector<double> zk(ny * nx * nz, 0.0);
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t v = 0; v < nx; ++v) zk[(y * nx + v) * nz + rng() % nz] = 1.0;
    const AuxiliarySystem aux(nx, ny, 1, nx, nz, uv, zk);
    const Distribution j = inner_joint(s, aux);
    const std::size_t Y_V[] = {1, 3}, X_Y[] = {0, 1}, Z[] = {4};
    const double i_yv = conditional_mutual_information(j, Y_V, Z);
    const double i_xy = conditional_mutual_information(j, X_Y, Z);
    EXPECT_NEAR(i_yv, j.marginal_entropy(Z), 1e-10);
    EXPECT_NEAR(i_xy, j.marginal_entropy(Z), 1e-10);
    const DistortionFn zero(nx, ny, nz, std::vector<double>(nx * ny * nz, 0.0));
    EXPECT_NEAR(evaluate_inner_point(s, zero, aux).r2, j.marginal_entropy(Z), 1e-10);
  }
}

TEST(RegionProperties, OuterEmbeddingNeverCostsMore) {
  std::mt19937_64 rng(109);
  for (int k = 0; k < 200; ++k) {
    const JointSource s(2, 3, oracle::random_pmf(rng, 6));
    const DistortionFn d(2, 3, 2, oracle::random_pmf(rng, 12));
    const auto aux = random_system(rng, 2, 3, 1 + k % 3, 1 + k % 2, 2);
    const auto in = evaluate_inner_point(s, d, aux);
    const auto out = evaluate_outer_point(s, d, embed_as_outer(aux));
    EXPECT_LE(out.r1, in.r1 + 1e-10);
    EXPECT_LE(out.r2, in.r2 + 1e-10);
    EXPECT_NEAR(out.d, in.d, 1e-12);
  }
}

TEST(RegionProperties, TimeSharingAveragesTriples) {
  std::mt19937_64 rng(113);
  for (int k = 0; k < 50; ++k) {
    const JointSource s(2, 2, oracle::random_pmf(rng, 4));
    const DistortionFn d(2, 2, 3, oracle::random_pmf(rng, 12));
    const auto a = random_system(rng, 2, 2, 2, 1, 3);
    const auto b = random_system(rng, 2, 2, 1, 3, 3);
    const double w = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto ta = evaluate_inner_point(s, d, a), tb = evaluate_inner_point(s, d, b);
    const auto t = evaluate_inner_point(s, d, time_share(a, b, w));
    EXPECT_NEAR(t.r1, w * ta.r1 + (1 - w) * tb.r1, 1e-10);
    EXPECT_NEAR(t.r2, w * ta.r2 + (1 - w) * tb.r2, 1e-10);
    EXPECT_NEAR(t.d, w * ta.d + (1 - w) * tb.d, 1e-12);
  }
  const auto a = random_system(rng, 2, 2, 1, 1, 2);
  EXPECT_THROW(time_share(a, a, 1.5), ValidationError);
}

TEST(InnerFrontier, PointsAreMutuallyNondominatedAndCertified) {
  const auto s = dsbs(0.2);
  const DistortionFn d(2, 2, 2, {0, 1, 1, 0, 1, 0, 0, 1});
  const auto f = optimize_inner_frontier(s, d, default_inner_cardinalities(s, d), small_budget());
  ASSERT_FALSE(f.points.empty());
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    const auto& p = f.points[i];
    const auto t = evaluate_inner_point(s, d, std::get<AuxiliarySystem>(p.witness));
    EXPECT_NEAR(t.r1, p.triple.r1, 1e-12);
    EXPECT_NEAR(t.r2, p.triple.r2, 1e-12);
    EXPECT_NEAR(t.d, p.triple.d, 1e-12);
    for (std::size_t j = 0; j < f.points.size(); ++j) {
      if (i == j) continue;
      EXPECT_FALSE(weakly_dominates(f.points[j].triple, p.triple)) << i << " by " << j;
    }
  }
}

TEST(InnerFrontier, DeterministicAcrossThreadCounts) {
  const auto s = dsbs(0.15);
  const auto d = DistortionFn::hamming_to_function(2, 2, kXor);
  auto b1 = small_budget(7);
  b1.threads = 1;
  auto b4 = small_budget(7);
  b4.threads = 4;
  const auto f1 = optimize_inner_frontier(s, d, {2, 2, 2}, b1);
  const auto f4 = optimize_inner_frontier(s, d, {2, 2, 2}, b4);
  ASSERT_EQ(f1.points.size(), f4.points.size());
  for (std::size_t i = 0; i < f1.points.size(); ++i) {
    EXPECT_EQ(f1.points[i].triple.r1, f4.points[i].triple.r1);
    EXPECT_EQ(f1.points[i].triple.r2, f4.points[i].triple.r2);
    EXPECT_EQ(f1.points[i].triple.d, f4.points[i].triple.d);
    EXPECT_EQ(f1.points[i].seed, f4.points[i].seed);
  }
}

TEST(InnerFrontier, RejectsBadArguments) {
  const auto s = dsbs(0.15);
  const auto d = DistortionFn::hamming_to_function(2, 2, kXor);
  auto zero = small_budget();
  zero.restarts = 0;
  EXPECT_THROW(optimize_inner_frontier(s, d, {2, 2, 2}, zero), ValidationError);
  zero = small_budget();
  zero.iterations = 0;
  EXPECT_THROW(optimize_outer_frontier(s, d, {2, 2}, zero), ValidationError);
  EXPECT_THROW(optimize_inner_frontier(s, d, {0, 2, 2}, small_budget()), ValidationError);
  EXPECT_THROW(optimize_inner_frontier(s, d, {2, 2, 3}, small_budget()), ValidationError);
}

TEST(OuterFrontier, FlaggedHeuristicAndBelowInner) {
  const auto s = dsbs(0.25);
  const DistortionFn d(2, 2, 2, {0, 1, 1, 0, 1, 0, 0, 1});
  auto b = small_budget(3);
  const auto in = optimize_inner_frontier(s, d, default_inner_cardinalities(s, d), b);
  const auto out = optimize_outer_frontier(s, d, default_outer_cardinalities(s, d), b);
  EXPECT_TRUE(out.heuristic_minimum);
  EXPECT_FALSE(in.heuristic_minimum);
  for (double slice : in.slices) {
    const auto i1 = in.min_r1_at(slice), o1 = out.min_r1_at(slice);
    const auto i2 = in.min_r2_at(slice), o2 = out.min_r2_at(slice);
    if (!i1) continue;
    ASSERT_TRUE(o1 && o2);
    EXPECT_LE(*o1, *i1 + 5e-3);
    EXPECT_LE(*o2, *i2 + 5e-3);
  }
}

TEST(LosslessFunction, XorOfSymmetricSource) {
  auto b = small_budget(11);
  b.restarts = 4;
  b.iterations = 2000;
  const auto r = lossless_function_rates(dsbs(0.11), kXor, b);
  EXPECT_LE(r.triple.d, kSliceTolerance);
  EXPECT_NEAR(r.triple.r1, oracle::kH011, 5e-3);
  EXPECT_NEAR(r.triple.r2, oracle::kH011, 5e-3);
}

TEST(LosslessFunction, IdenticalSourcesNeedNoFirstLink) {
  // X = Y uniform and z = x: Y already knows X, the relay forwards H(X).
  const JointSource s(2, 2, {0.5, 0, 0, 0.5});
  const std::size_t f[4] = {0, 0, 1, 1};
  const auto r = lossless_function_rates(s, f, small_budget(5));
  EXPECT_LE(r.triple.d, kSliceTolerance);
  EXPECT_NEAR(r.triple.r1, 0.0, 5e-3);
  EXPECT_NEAR(r.triple.r2, 1.0, 5e-3);
}

TEST(Markov, XYZChainNeedsOnlyTheRelay) {
  std::mt19937_64 rng(127);
  for (int k = 0; k < 20; ++k) {
    const std::size_t nx = 2 + k % 3, ny = 2 + k % 2, nz = 3;
    const JointSource s(nx, ny, oracle::random_pmf(rng, nx * ny));
    const auto zy = oracle::random_kernel(rng, ny, nz);
    std::vector<double> kernel;
    for (std::size_t x = 0; x < nx; ++x) kernel.insert(kernel.end(), zy.begin(), zy.end());
    const auto r = markov_rates(s, MarkovChain::x_y_z, kernel, nz);
    oracle::Joint j;
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t z = 0; z < nz; ++z) j[{int(x), int(y), int(z)}] = s(x, y) * zy[y * nz + z];
    EXPECT_EQ(r.r1, 0.0);
    EXPECT_NEAR(r.r2, oracle::cmi(j, {1}, {2}), 1e-10);
  }
}

TEST(Markov, YXZChainMatchesWitness) {
  std::mt19937_64 rng(131);
  for (int k = 0; k < 20; ++k) {
    const std::size_t nx = 2 + k % 3, ny = 2 + k % 2, nz = 2 + k % 3;
    const JointSource s(nx, ny, oracle::random_pmf(rng, nx * ny));
    const auto zx = oracle::random_kernel(rng, nx, nz);
    const auto r = markov_rates(s, MarkovChain::y_x_z, kernel_from_x(s, zx, nz), nz);
    oracle::Joint j;
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t z = 0; z < nz; ++z) j[{int(x), int(y), int(z)}] = s(x, y) * zx[x * nz + z];
    EXPECT_NEAR(r.r1, oracle::cmi(j, {0}, {2}, {1}), 1e-10);
    EXPECT_NEAR(r.r2, oracle::cmi(j, {0}, {2}), 1e-10);
    const DistortionFn zero(nx, ny, nz, std::vector<double>(nx * ny * nz, 0.0));
    const auto t = evaluate_inner_point(s, zero, markov_inner_witness(s, zx, nz));
    EXPECT_NEAR(t.r1, r.r1, 1e-10);
    EXPECT_NEAR(t.r2, r.r2, 1e-10);
  }
}

TEST(Markov, RejectsKernelBreakingTheChain) {
  const auto s = dsbs(0.2);
  // p(z|x,y) depends on y, so Y-X-Z fails.
  const std::vector<double> k = {1, 0, 0, 1, 1, 0, 0, 1};
  EXPECT_THROW(markov_rates(s, MarkovChain::y_x_z, k, 2), ValidationError);
  EXPECT_NO_THROW(markov_rates(s, MarkovChain::x_y_z, k, 2));
}

TEST(Slices, AutomaticGridSpansReachableDistortions) {
  const auto s = dsbs(0.2);
  const DistortionFn d(2, 2, 2, {0, 1, 1, 0, 1, 0, 0, 1});  // 1{z != x xor y}
  EXPECT_NEAR(minimum_distortion(s, d), 0.0, 1e-15);
  EXPECT_NEAR(zero_rate_distortion(s, d), 0.2, 1e-15);
  // Z = X: guessing X from Y errs with probability 0.2.
  EXPECT_NEAR(zero_rate_distortion(s, DistortionFn(2, 2, 2, {0, 1, 0, 1, 1, 0, 1, 0})), 0.2, 1e-15);
  EXPECT_NEAR(zero_rate_distortion(dsbs(0.5), DistortionFn(2, 2, 2, {0, 1, 0, 1, 1, 0, 1, 0})), 0.5, 1e-15);
  // Z = Y: free at zero rate.
  EXPECT_NEAR(zero_rate_distortion(s, DistortionFn(2, 2, 2, {0, 1, 1, 0, 0, 1, 1, 0})), 0.0, 1e-15);
  SearchBudget b;
  b.automatic_slices = 3;
  const auto sl = resolve_slices(s, d, b);
  ASSERT_EQ(sl.size(), 3u);
  EXPECT_NEAR(sl[1], 0.1, 1e-15);
}
