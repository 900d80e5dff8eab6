#pragma once

// Invariant suites behind `cascade verify`. Each suite sweeps a fixed,
// seeded parameter set and reports the worst violation it saw.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "cascade/gaussian.hpp"
#include "cascade/model.hpp"
#include "cascade/random.hpp"
#include "cascade/region.hpp"

namespace cascade::verify {

struct SuiteReport {
  std::string suite;
  bool passed = true;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // largest error or violation seen
  double tolerance = 0.0;
  std::string summary;
  nlohmann::json details = nlohmann::json::object();

  void check(bool ok, double error = 0.0) {
    ++checks;
    worst = std::max(worst, error);
    if (!ok) {
      ++failures;
      passed = false;
    }
  }
};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"lemma1", "threshold", "continuity", "sandwich", "markov", "function"};
  return names;
}

/// Sum-rate gap in [0, 1] and non-increasing in D along each grid line.
inline SuiteReport sumrate_gap(std::size_t d_points = 40, double tol = 1e-9) {
  SuiteReport r{"lemma1"};
  r.tolerance = tol;
  double max_gap = 0.0;
  std::size_t lines = 0;
  for (double px : {0.25, 0.5, 1.0, 2.0})
    for (double py : {1.0, 2.0, 4.0}) {
      if (px > py) continue;
      for (double rho : {-0.9, -0.5, 0.0, 0.3, 0.6, 0.95}) {
        const GaussianPair pair(px, py, rho);
        const double s = pair.sum_variance();
        ++lines;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k <= d_points; ++k) {
          const double d = s * static_cast<double>(k) / static_cast<double>(d_points);
          const double gap = gaussian::sumrate_gap(pair, d);
          max_gap = std::max(max_gap, gap);
          const double range_violation = std::max(0.0, std::max(-gap, gap - 1.0));
          const double mono_violation = std::max(0.0, gap - prev);
          r.check(range_violation <= tol && mono_violation <= tol, std::max(range_violation, mono_violation));
          prev = gap;
        }
      }
    }
  r.details = {{"lines", lines}, {"points", r.checks}, {"max_gap", max_gap}};
  r.summary = "max gap " + num(max_gap) + " bit over " + std::to_string(r.checks) + " points";
  return r;
}

/// Px > Py: forward wins exactly below the threshold rate, recompress at or
/// above it.
inline SuiteReport threshold(std::size_t pairs = 120, std::uint64_t seed = 1, double tol = 1e-9) {
  SuiteReport r{"threshold"};
  r.tolerance = tol;
  Rng rng(derive_seed(seed, {0x7412}));
  for (std::size_t p = 0; p < pairs; ++p) {
    const double py = 0.2 + 2.0 * uniform01(rng);
    const double px = py * (1.05 + 7.0 * uniform01(rng));
    const double rho = -0.95 + 1.9 * uniform01(rng);
    const GaussianPair pair(px, py, rho);
    const double thr = gaussian::strategy_threshold(pair, 0.0).threshold;
    for (double t : {0.0, 0.25, 0.5, 0.9, 0.999, 1.0, 1.001, 1.2, 1.6, 2.5}) {
      const double r1 = thr * t;
      for (double r2 : {0.05, 0.3, 0.8, 1.5, 3.0, 6.0}) {
        const double f = gaussian::forward_distortion(pair, r1, r2);
        const double c = gaussian::recompress_distortion(pair, r1, r2);
        const auto choice = gaussian::strategy_threshold(pair, r1).choice;
        const double chosen = gaussian::inner_bound_distortion(pair, r1, r2);
        const double regret = chosen - std::min(f, c);
        const bool expected = (r1 < thr) == (choice == gaussian::Strategy::forward);
        r.check(expected && regret <= tol, std::max(0.0, regret));
      }
    }
  }
  r.summary = std::to_string(pairs) + " pairs, worst regret " + num(r.worst);
  return r;
}

/// Both forward expressions agree at the sub-case boundary.
inline SuiteReport continuity(std::size_t draws = 200, std::uint64_t seed = 1, double tol = 1e-9) {
  SuiteReport r{"continuity"};
  r.tolerance = tol;
  Rng rng(derive_seed(seed, {0xC047}));
  for (std::size_t k = 0; k < draws; ++k) {
    const GaussianPair pair(0.1 + 5.0 * uniform01(rng), 0.1 + 5.0 * uniform01(rng), -0.99 + 1.98 * uniform01(rng));
    const double r1 = 4.0 * uniform01(rng);
    const double r2 = gaussian::forward_subcase_boundary(pair, r1);
    const double a = gaussian::forward_distortion_rate_limited(pair, r2);
    const double b = gaussian::forward_distortion_source_limited(pair, r1, r2);
    r.check(std::abs(a - b) <= tol, std::abs(a - b));
  }
  r.summary = "max boundary mismatch " + num(r.worst);
  return r;
}

/// Random binary source with a random three-valued distortion table.
inline std::pair<JointSource, DistortionFn> random_instance(Rng& rng, std::size_t nx = 2, std::size_t ny = 2,
                                                            std::size_t nz = 2) {
  std::vector<double> p(nx * ny);
  double total = 0.0;
  for (auto& v : p) total += (v = 0.05 + uniform01(rng));
  for (auto& v : p) v /= total;
  std::vector<double> d(nx * ny * nz);
  for (auto& v : d) v = static_cast<double>(uniform_index(rng, 3)) / 2.0;
  return {JointSource(nx, ny, std::move(p)), DistortionFn(nx, ny, nz, std::move(d))};
}

/// The best outer (R1, R2) at each slice never exceeds the best inner one.
inline SuiteReport sandwich(std::size_t sources = 10, std::uint64_t seed = 1, double slack = 5e-3,
                            region::SearchBudget budget = {}) {
  SuiteReport r{"sandwich"};
  r.tolerance = slack;
  Rng rng(derive_seed(seed, {0x5A4D}));
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t s = 0; s < sources; ++s) {
    auto [source, dist] = random_instance(rng);
    budget.seed = derive_seed(seed, {0x5A4D, s});
    const auto inner = region::optimize_inner_frontier(source, dist, region::default_inner_cardinalities(source, dist),
                                                       budget);
    const auto outer = region::optimize_outer_frontier(source, dist, region::default_outer_cardinalities(source, dist),
                                                       budget);
    for (double d : inner.slices) {
      const auto i1 = inner.min_r1_at(d), i2 = inner.min_r2_at(d);
      const auto o1 = outer.min_r1_at(d), o2 = outer.min_r2_at(d);
      if (!i1 || !i2) continue;  // nothing inner-feasible found at this slice
      const bool outer_found = o1 && o2;
      const double excess = outer_found ? std::max(*o1 - *i1, *o2 - *i2) : 0.0;
      r.check(outer_found && excess <= slack, std::max(0.0, excess));
      rows.push_back({{"source", s}, {"d", d}, {"excess", excess}});
    }
  }
  r.details = {{"slices", rows}};
  r.summary = std::to_string(sources) + " sources, worst outer-over-inner excess " + num(r.worst);
  return r;
}

/// For Y-X-Z coordination the witness U = Z, V trivial meets the closed form.
inline SuiteReport markov(std::size_t instances = 20, std::uint64_t seed = 1, double tol = 1e-10) {
  SuiteReport r{"markov"};
  r.tolerance = tol;
  Rng rng(derive_seed(seed, {0x3A7C}));
  auto random_row = [&](std::size_t len) {
    std::vector<double> row(len);
    double total = 0.0;
    for (auto& v : row) total += (v = 0.02 + uniform01(rng));
    for (auto& v : row) v /= total;
    return row;
  };
  for (std::size_t k = 0; k < instances; ++k) {
    const std::size_t nx = 2 + uniform_index(rng, 3), ny = 2 + uniform_index(rng, 3), nz = 2 + uniform_index(rng, 3);
    std::vector<double> p;
    for (std::size_t x = 0; x < nx * ny; ++x) p.push_back(0.0);
    const auto px = random_row(nx);
    for (std::size_t x = 0; x < nx; ++x) {
      const auto py = random_row(ny);
      for (std::size_t y = 0; y < ny; ++y) p[x * ny + y] = px[x] * py[y];
    }
    const JointSource source(nx, ny, p);
    std::vector<double> zx;
    for (std::size_t x = 0; x < nx; ++x) {
      const auto row = random_row(nz);
      zx.insert(zx.end(), row.begin(), row.end());
    }
    const auto closed = region::markov_rates(source, region::MarkovChain::y_x_z,
                                             region::kernel_from_x(source, zx, nz), nz);
    const auto witness = region::markov_inner_witness(source, zx, nz);
    const DistortionFn zero(nx, ny, nz, std::vector<double>(nx * ny * nz, 0.0));
    const auto t = region::evaluate_inner_point(source, zero, witness);
    const double err = std::max(std::abs(t.r1 - closed.r1), std::abs(t.r2 - closed.r2));
    r.check(err <= tol, err);
  }
  r.summary = std::to_string(instances) + " instances, max error " + num(r.worst);
  return r;
}

/// Lossless XOR of a doubly symmetric binary source with crossover p needs
/// h(p) on each link, and the outer search cannot beat it.
inline SuiteReport function(double p = 0.11, double tol = 5e-3, region::SearchBudget budget = {}) {
  SuiteReport r{"function"};
  r.tolerance = tol;
  const JointSource source(2, 2, {(1 - p) / 2, p / 2, p / 2, (1 - p) / 2});
  const std::size_t f[4] = {0, 1, 1, 0};
  const double h = binary_entropy(p);
  const auto inner = region::lossless_function_rates(source, f, budget);
  const double inner_err = std::max(std::abs(inner.triple.r1 - h), std::abs(inner.triple.r2 - h));
  r.check(inner.triple.d <= region::kSliceTolerance && inner_err <= tol, inner_err);

  const DistortionFn dist = DistortionFn::hamming_to_function(2, 2, f);
  budget.distortion_slices = {0.0};
  const auto outer = region::optimize_outer_frontier(source, dist, region::default_outer_cardinalities(source, dist),
                                                     budget);
  const auto o1 = outer.min_r1_at(0.0), o2 = outer.min_r2_at(0.0);
  const double undershoot = (o1 && o2) ? std::max(0.0, std::max(h - *o1, h - *o2)) : 0.0;
  r.check(o1 && o2 && undershoot <= tol, undershoot);
  r.details = {{"h", h},
               {"inner_r1", inner.triple.r1},
               {"inner_r2", inner.triple.r2},
               {"outer_min_r1", o1 ? *o1 : -1.0},
               {"outer_min_r2", o2 ? *o2 : -1.0}};
  r.summary = "inner (" + num(inner.triple.r1) + ", " + num(inner.triple.r2) + ") vs h(p) " +
              num(h);
  return r;
}

inline SuiteReport run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "lemma1") return sumrate_gap();
  if (name == "threshold") return threshold(120, seed);
  if (name == "continuity") return continuity(200, seed);
  if (name == "sandwich") return sandwich(10, seed);
  if (name == "markov") return markov(20, seed);
  if (name == "function") {
    region::SearchBudget b;
    b.seed = seed;
    return function(0.11, 5e-3, b);
  }
  throw ValidationError("unknown suite '" + name + "'");
}

}  // namespace cascade::verify
