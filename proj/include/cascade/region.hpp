#pragma once

// Inner and outer rate-distortion regions of the cascade network over finite
// alphabets.
//
// Inner region: joints p0(x,y) p(u,v|x) p(z|y,u,v) with
//   R1 >= I(X;U,V|Y),  R2 >= I(X;U) + I(Y,V;Z|U),  D >= E d(X,Y,Z).
// U is the part of Encoder 1's description forwarded to the decoder, V the
// part Encoder 2 decodes and recompresses together with Y.
//
// Outer region: joints p0(x,y) p(u|x) p(z|y,u) with
//   R1 >= I(X;U|Y),  R2 >= I(X,Y;Z),  D >= E d(X,Y,Z).
//
// Both are treated as closed sets. Frontiers are found by randomized local
// search over the test channels, so an inner frontier is a certified inner
// approximation (every point carries its witness kernels) and an outer
// frontier is only a heuristic minimum.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <variant>
#include <vector>

#include "cascade/model.hpp"
#include "cascade/random.hpp"

namespace cascade::region {

// A point counts for distortion slice D when its distortion is <= D + this.
inline constexpr double kSliceTolerance = 1e-9;

namespace detail {

inline void validate_rows(std::span<const double> kernel, std::size_t rows, std::size_t row_len,
                          const char* what) {
  if (kernel.size() != rows * row_len) throw ValidationError(std::string(what) + ": kernel size mismatch");
  for (std::size_t r = 0; r < rows; ++r) {
    cascade::detail::validate_pmf(kernel.subspan(r * row_len, row_len), what);
  }
}

inline double plogp(double p) { return p > kZeroProbability ? -p * std::log2(p) : 0.0; }

inline double entropy_of(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h += plogp(v);
  return h;
}

}  // namespace detail

/// Test channels p(u,v|x) and p(z|y,u,v) of an inner-region point.
/// Kernels are row-major: uv_given_x as [x][u][v], z_given_yuv as [y][u][v][z].
class AuxiliarySystem {
 public:
  AuxiliarySystem(std::size_t size_x, std::size_t size_y, std::size_t size_u, std::size_t size_v,
                  std::size_t size_z, std::vector<double> uv_given_x, std::vector<double> z_given_yuv)
      : size_x_(size_x),
        size_y_(size_y),
        size_u_(size_u),
        size_v_(size_v),
        size_z_(size_z),
        uv_given_x_(std::move(uv_given_x)),
        z_given_yuv_(std::move(z_given_yuv)) {
    if (!size_x || !size_y || !size_u || !size_v || !size_z) {
      throw ValidationError("AuxiliarySystem: alphabet sizes must be positive");
    }
    detail::validate_rows(uv_given_x_, size_x_, size_u_ * size_v_, "AuxiliarySystem p(u,v|x)");
    detail::validate_rows(z_given_yuv_, size_y_ * size_u_ * size_v_, size_z_, "AuxiliarySystem p(z|y,u,v)");
  }

  std::size_t size_x() const { return size_x_; }
  std::size_t size_y() const { return size_y_; }
  std::size_t size_u() const { return size_u_; }
  std::size_t size_v() const { return size_v_; }
  std::size_t size_z() const { return size_z_; }

  double uv_given_x(std::size_t x, std::size_t u, std::size_t v) const {
    return uv_given_x_[(x * size_u_ + u) * size_v_ + v];
  }
  double z_given_yuv(std::size_t y, std::size_t u, std::size_t v, std::size_t z) const {
    return z_given_yuv_[((y * size_u_ + u) * size_v_ + v) * size_z_ + z];
  }
  std::span<const double> kernel_uv_given_x() const { return uv_given_x_; }
  std::span<const double> kernel_z_given_yuv() const { return z_given_yuv_; }

  void require_compatible(const JointSource& source, const DistortionFn& dist) const {
    dist.require_compatible(source);
    if (source.size_x() != size_x_ || source.size_y() != size_y_ || dist.size_z() != size_z_) {
      throw ValidationError("AuxiliarySystem: alphabets do not match the source and distortion");
    }
  }

 private:
  std::size_t size_x_, size_y_, size_u_, size_v_, size_z_;
  std::vector<double> uv_given_x_;
  std::vector<double> z_given_yuv_;
};

/// Test channels p(u|x) and p(z|y,u) of an outer-region point.
class OuterSystem {
 public:
  OuterSystem(std::size_t size_x, std::size_t size_y, std::size_t size_u, std::size_t size_z,
              std::vector<double> u_given_x, std::vector<double> z_given_yu)
      : size_x_(size_x),
        size_y_(size_y),
        size_u_(size_u),
        size_z_(size_z),
        u_given_x_(std::move(u_given_x)),
        z_given_yu_(std::move(z_given_yu)) {
    if (!size_x || !size_y || !size_u || !size_z) throw ValidationError("OuterSystem: alphabet sizes must be positive");
    detail::validate_rows(u_given_x_, size_x_, size_u_, "OuterSystem p(u|x)");
    detail::validate_rows(z_given_yu_, size_y_ * size_u_, size_z_, "OuterSystem p(z|y,u)");
  }

  std::size_t size_x() const { return size_x_; }
  std::size_t size_y() const { return size_y_; }
  std::size_t size_u() const { return size_u_; }
  std::size_t size_z() const { return size_z_; }
  double u_given_x(std::size_t x, std::size_t u) const { return u_given_x_[x * size_u_ + u]; }
  double z_given_yu(std::size_t y, std::size_t u, std::size_t z) const {
    return z_given_yu_[(y * size_u_ + u) * size_z_ + z];
  }
  std::span<const double> kernel_u_given_x() const { return u_given_x_; }
  std::span<const double> kernel_z_given_yu() const { return z_given_yu_; }

  void require_compatible(const JointSource& source, const DistortionFn& dist) const {
    dist.require_compatible(source);
    if (source.size_x() != size_x_ || source.size_y() != size_y_ || dist.size_z() != size_z_) {
      throw ValidationError("OuterSystem: alphabets do not match the source and distortion");
    }
  }

 private:
  std::size_t size_x_, size_y_, size_u_, size_z_;
  std::vector<double> u_given_x_;
  std::vector<double> z_given_yu_;
};

namespace detail {

// Rates and distortion of an inner point straight from the kernels. The
// searches call this in their inner loop, so it skips validation.
inline RateDistortionTriple inner_triple(const JointSource& source, const DistortionFn& dist, std::size_t nu,
                                         std::size_t nv, std::span<const double> uv, std::span<const double> zk) {
  const std::size_t nx = source.size_x(), ny = source.size_y(), nz = dist.size_z();
  std::vector<double> p_xu(nx * nu, 0.0), p_yuv(ny * nu * nv, 0.0), p_uz(nu * nz, 0.0);
  std::vector<double> p_x(nx, 0.0), p_y(ny, 0.0);
  double h_xyuv = 0.0, d = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      const double p0 = source(x, y);
      p_x[x] += p0;
      p_y[y] += p0;
      if (p0 <= 0.0) continue;
      for (std::size_t u = 0; u < nu; ++u) {
        for (std::size_t v = 0; v < nv; ++v) {
          const double w = p0 * uv[(x * nu + u) * nv + v];
          if (w <= 0.0) continue;
          h_xyuv += plogp(w);
          p_xu[x * nu + u] += w;
          const std::size_t yuv = (y * nu + u) * nv + v;
          p_yuv[yuv] += w;
          double ed = 0.0;
          for (std::size_t z = 0; z < nz; ++z) ed += zk[yuv * nz + z] * dist(x, y, z);
          d += w * ed;
        }
      }
    }
  }
  double h_yuvz = 0.0;
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t u = 0; u < nu; ++u) {
      for (std::size_t v = 0; v < nv; ++v) {
        const std::size_t yuv = (y * nu + u) * nv + v;
        const double w = p_yuv[yuv];
        if (w <= 0.0) continue;
        for (std::size_t z = 0; z < nz; ++z) {
          const double q = w * zk[yuv * nz + z];
          h_yuvz += plogp(q);
          p_uz[u * nz + z] += q;
        }
      }
    }
  }
  const double h_xy = entropy_of(source.pmf());
  const double h_x = entropy_of(p_x);
  const double h_y = entropy_of(p_y);
  const double h_yuv = entropy_of(p_yuv);
  const double r1 = h_xy + h_yuv - h_xyuv - h_y;
  const double r2 = h_x - entropy_of(p_xu) + h_yuv + entropy_of(p_uz) - h_yuvz;
  return {std::max(0.0, r1), std::max(0.0, r2), std::max(0.0, d)};
}

inline RateDistortionTriple outer_triple(const JointSource& source, const DistortionFn& dist, std::size_t nu,
                                         std::span<const double> uk, std::span<const double> zk) {
  const std::size_t nx = source.size_x(), ny = source.size_y(), nz = dist.size_z();
  std::vector<double> p_yu(ny * nu, 0.0), p_xyz(nx * ny * nz, 0.0), p_z(nz, 0.0), p_y(ny, 0.0);
  double h_xyu = 0.0;
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      const double p0 = source(x, y);
      p_y[y] += p0;
      if (p0 <= 0.0) continue;
      for (std::size_t u = 0; u < nu; ++u) {
        const double w = p0 * uk[x * nu + u];
        if (w <= 0.0) continue;
        h_xyu += plogp(w);
        p_yu[y * nu + u] += w;
        for (std::size_t z = 0; z < nz; ++z) p_xyz[(x * ny + y) * nz + z] += w * zk[(y * nu + u) * nz + z];
      }
    }
  }
  double d = 0.0;
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t z = 0; z < nz; ++z) {
        const double w = p_xyz[(x * ny + y) * nz + z];
        p_z[z] += w;
        d += w * dist(x, y, z);
      }
  const double h_xy = entropy_of(source.pmf());
  const double r1 = h_xy + entropy_of(p_yu) - h_xyu - entropy_of(p_y);
  const double r2 = h_xy + entropy_of(p_z) - entropy_of(p_xyz);
  return {std::max(0.0, r1), std::max(0.0, r2), std::max(0.0, d)};
}

}  // namespace detail

/// Dense joint over (X, Y, U, V, Z).
inline Distribution inner_joint(const JointSource& source, const AuxiliarySystem& aux) {
  const std::size_t nx = source.size_x(), ny = source.size_y();
  const std::size_t nu = aux.size_u(), nv = aux.size_v(), nz = aux.size_z();
  if (aux.size_x() != nx || aux.size_y() != ny) throw ValidationError("inner_joint: alphabet mismatch");
  std::vector<double> p;
  p.reserve(nx * ny * nu * nv * nz);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t u = 0; u < nu; ++u)
        for (std::size_t v = 0; v < nv; ++v)
          for (std::size_t z = 0; z < nz; ++z)
            p.push_back(source(x, y) * aux.uv_given_x(x, u, v) * aux.z_given_yuv(y, u, v, z));
  return Distribution::assemble({nx, ny, nu, nv, nz}, std::move(p));
}

/// Dense joint over (X, Y, U, Z).
inline Distribution outer_joint(const JointSource& source, const OuterSystem& sys) {
  const std::size_t nx = source.size_x(), ny = source.size_y(), nu = sys.size_u(), nz = sys.size_z();
  if (sys.size_x() != nx || sys.size_y() != ny) throw ValidationError("outer_joint: alphabet mismatch");
  std::vector<double> p;
  p.reserve(nx * ny * nu * nz);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t u = 0; u < nu; ++u)
        for (std::size_t z = 0; z < nz; ++z) p.push_back(source(x, y) * sys.u_given_x(x, u) * sys.z_given_yu(y, u, z));
  return Distribution::assemble({nx, ny, nu, nz}, std::move(p));
}

/// (I(X;U,V|Y), I(X;U) + I(Y,V;Z|U), E d). Every triple coordinatewise above
/// the result lies in the inner region.
inline RateDistortionTriple evaluate_inner_point(const JointSource& source, const DistortionFn& dist,
                                                 const AuxiliarySystem& aux) {
  aux.require_compatible(source, dist);
  return detail::inner_triple(source, dist, aux.size_u(), aux.size_v(), aux.kernel_uv_given_x(),
                              aux.kernel_z_given_yuv());
}

/// (I(X;U|Y), I(X,Y;Z), E d).
inline RateDistortionTriple evaluate_outer_point(const JointSource& source, const DistortionFn& dist,
                                                 const OuterSystem& sys) {
  sys.require_compatible(source, dist);
  return detail::outer_triple(source, dist, sys.size_u(), sys.kernel_u_given_x(), sys.kernel_z_given_yu());
}

/// Outer-region system with U' = (U, V). Its rates never exceed those of the
/// inner system it came from.
inline OuterSystem embed_as_outer(const AuxiliarySystem& aux) {
  const std::size_t nuv = aux.size_u() * aux.size_v();
  std::vector<double> zk(aux.kernel_z_given_yuv().begin(), aux.kernel_z_given_yuv().end());
  std::vector<double> uk(aux.kernel_uv_given_x().begin(), aux.kernel_uv_given_x().end());
  return OuterSystem(aux.size_x(), aux.size_y(), nuv, aux.size_z(), std::move(uk), std::move(zk));
}

/// Time-sharing of two inner systems: a coin Q (P[Q = a] = weight) is drawn
/// at Encoder 1 and carried inside U, so U' ranges over the disjoint union of
/// both U alphabets. The result evaluates to the weighted average of the two
/// triples.
inline AuxiliarySystem time_share(const AuxiliarySystem& a, const AuxiliarySystem& b, double weight) {
  if (!(weight >= 0.0 && weight <= 1.0)) throw ValidationError("time_share: weight must lie in [0, 1]");
  if (a.size_x() != b.size_x() || a.size_y() != b.size_y() || a.size_z() != b.size_z()) {
    throw ValidationError("time_share: systems differ in source or reconstruction alphabets");
  }
  const std::size_t nx = a.size_x(), ny = a.size_y(), nz = a.size_z();
  const std::size_t nu = a.size_u() + b.size_u();
  const std::size_t nv = std::max(a.size_v(), b.size_v());
  std::vector<double> uv(nx * nu * nv, 0.0);
  std::vector<double> zk(ny * nu * nv * nz, 1.0 / static_cast<double>(nz));

  auto place = [&](const AuxiliarySystem& s, std::size_t offset, double w) {
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t u = 0; u < s.size_u(); ++u)
        for (std::size_t v = 0; v < s.size_v(); ++v) uv[(x * nu + offset + u) * nv + v] = w * s.uv_given_x(x, u, v);
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t u = 0; u < s.size_u(); ++u)
        for (std::size_t v = 0; v < s.size_v(); ++v)
          for (std::size_t z = 0; z < nz; ++z)
            zk[((y * nu + offset + u) * nv + v) * nz + z] = s.z_given_yuv(y, u, v, z);
  };
  place(a, 0, weight);
  place(b, a.size_u(), 1.0 - weight);
  return AuxiliarySystem(nx, ny, nu, nv, nz, std::move(uv), std::move(zk));
}

// ---------------------------------------------------------------------------
// Frontiers

enum class FrontierKind { inner, outer };

inline const char* to_string(FrontierKind k) { return k == FrontierKind::inner ? "inner" : "outer"; }

using Witness = std::variant<AuxiliarySystem, OuterSystem>;

struct FrontierPoint {
  RateDistortionTriple triple;
  Witness witness;
  std::uint64_t seed = 0;  // seed of the search task that found the point
};

/// a is no worse than b in every coordinate.
inline bool weakly_dominates(const RateDistortionTriple& a, const RateDistortionTriple& b) {
  return a.r1 <= b.r1 && a.r2 <= b.r2 && a.d <= b.d;
}

inline bool lexicographic_less(const RateDistortionTriple& a, const RateDistortionTriple& b) {
  if (a.r1 != b.r1) return a.r1 < b.r1;
  if (a.r2 != b.r2) return a.r2 < b.r2;
  return a.d < b.d;
}

/// Removes every point weakly dominated by another. Duplicates keep the
/// lexicographically first (r1, r2, d, seed) representative.
template <class Point, class TripleOf>
std::vector<Point> pareto_prune(std::vector<Point> points, TripleOf triple_of) {
  std::stable_sort(points.begin(), points.end(), [&](const Point& a, const Point& b) {
    const auto& ta = triple_of(a);
    const auto& tb = triple_of(b);
    if (lexicographic_less(ta, tb)) return true;
    if (lexicographic_less(tb, ta)) return false;
    return a.seed < b.seed;
  });
  // A dominating point always sorts before the point it dominates.
  std::vector<Point> kept;
  for (auto& p : points) {
    const auto& t = triple_of(p);
    const bool dominated = std::any_of(kept.begin(), kept.end(),
                                       [&](const Point& k) { return weakly_dominates(triple_of(k), t); });
    if (!dominated) kept.push_back(std::move(p));
  }
  return kept;
}

struct RegionFrontier {
  FrontierKind kind = FrontierKind::inner;
  std::vector<FrontierPoint> points;
  std::vector<double> slices;      // distortion levels the search targeted
  bool heuristic_minimum = false;  // outer frontiers are search results, not certified bounds

  std::vector<const FrontierPoint*> at_slice(double d) const {
    std::vector<const FrontierPoint*> out;
    for (const auto& p : points)
      if (p.triple.d <= d + kSliceTolerance) out.push_back(&p);
    return out;
  }

  std::optional<double> min_r1_at(double d) const {
    std::optional<double> best;
    for (const auto* p : at_slice(d))
      if (!best || p->triple.r1 < *best) best = p->triple.r1;
    return best;
  }

  std::optional<double> min_r2_at(double d) const {
    std::optional<double> best;
    for (const auto* p : at_slice(d))
      if (!best || p->triple.r2 < *best) best = p->triple.r2;
    return best;
  }

  /// Point at the slice minimizing w R1 + (1 - w) R2; ties go lexicographic.
  const FrontierPoint* best_at(double d, double weight_r1) const {
    const FrontierPoint* best = nullptr;
    double best_value = 0.0;
    for (const auto* p : at_slice(d)) {
      const double value = weight_r1 * p->triple.r1 + (1.0 - weight_r1) * p->triple.r2;
      if (!best || value < best_value - 1e-12 ||
          (std::abs(value - best_value) <= 1e-12 && lexicographic_less(p->triple, best->triple))) {
        best = p;
        best_value = value;
      }
    }
    return best;
  }
};

/// Search configuration. Each (rate weight, distortion slice, restart) cell is
/// an independent local search with its own derived seed.
struct SearchBudget {
  std::size_t restarts = 6;
  std::size_t iterations = 3000;
  std::uint64_t seed = 1;
  std::vector<double> rate_weights = {0.0, 0.25, 0.5, 0.75, 1.0};  // weight on R1; R2 gets the rest
  std::vector<double> distortion_slices;                           // empty: automatic
  std::size_t automatic_slices = 5;
  std::size_t threads = 0;  // 0: hardware concurrency
  // Also add Blahut-Arimoto solutions of the (X, Y) -> Z problem at each slice.
  bool seed_with_rate_distortion = true;
};

struct InnerCardinalities {
  std::size_t size_u;
  std::size_t size_v;
  std::size_t size_z;
};

struct OuterCardinalities {
  std::size_t size_u;
  std::size_t size_z;
};

/// |U| = |V| = |X| + 2, |Z| from the distortion function.
inline InnerCardinalities default_inner_cardinalities(const JointSource& source, const DistortionFn& dist) {
  return {source.size_x() + 2, source.size_x() + 2, dist.size_z()};
}

inline OuterCardinalities default_outer_cardinalities(const JointSource& source, const DistortionFn& dist) {
  return {source.size_x() + 2, dist.size_z()};
}

/// Distortion reachable with full knowledge of (X, Y) at the decoder.
inline double minimum_distortion(const JointSource& source, const DistortionFn& dist) {
  double d = 0.0;
  for (std::size_t x = 0; x < source.size_x(); ++x)
    for (std::size_t y = 0; y < source.size_y(); ++y) {
      double best = dist(x, y, 0);
      for (std::size_t z = 1; z < dist.size_z(); ++z) best = std::min(best, dist(x, y, z));
      d += source(x, y) * best;
    }
  return d;
}

/// Distortion reachable at zero rate: the decoder still sees Y.
inline double zero_rate_distortion(const JointSource& source, const DistortionFn& dist) {
  double total = 0.0;
  for (std::size_t y = 0; y < source.size_y(); ++y) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t z = 0; z < dist.size_z(); ++z) {
      double d = 0.0;
      for (std::size_t x = 0; x < source.size_x(); ++x) d += source(x, y) * dist(x, y, z);
      best = std::min(best, d);
    }
    total += best;
  }
  return total;
}

inline std::vector<double> resolve_slices(const JointSource& source, const DistortionFn& dist,
                                          const SearchBudget& budget) {
  if (!budget.distortion_slices.empty()) return budget.distortion_slices;
  const double lo = minimum_distortion(source, dist);
  const double hi = zero_rate_distortion(source, dist);
  const std::size_t k = std::max<std::size_t>(1, budget.automatic_slices);
  std::vector<double> out;
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back(k == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1));
  }
  return out;
}

namespace detail {

// Row-stochastic block of a kernel: `rows` conditional pmfs of `row_len`.
struct KernelBlock {
  std::size_t rows = 0;
  std::size_t row_len = 0;
  std::vector<double> values;

  std::span<double> row(std::size_t r) { return {values.data() + r * row_len, row_len}; }
};

using KernelPair = std::array<KernelBlock, 2>;

struct Score {
  double violation;
  double primary;
  double secondary;
};

inline bool better(const Score& a, const Score& b) {
  if (a.violation != b.violation) return a.violation < b.violation;
  if (a.primary < b.primary - 1e-12) return true;
  if (a.primary > b.primary + 1e-12) return false;
  return a.secondary < b.secondary - 1e-12;
}

struct Candidate {
  RateDistortionTriple triple;
  KernelPair kernels;
  std::uint64_t seed;
};

inline void insert_pareto(std::vector<Candidate>& set, const RateDistortionTriple& t, const KernelPair& k,
                          std::uint64_t seed) {
  for (const auto& c : set)
    if (weakly_dominates(c.triple, t)) return;
  std::erase_if(set, [&](const Candidate& c) { return weakly_dominates(t, c.triple); });
  set.push_back({t, k, seed});
}

inline void dirichlet_row(std::span<double> row, Rng& rng) {
  double total = 0.0;
  for (double& v : row) {
    v = -std::log(1.0 - uniform01(rng));
    total += v;
  }
  for (double& v : row) v /= total;
}

inline void vertex_row(std::span<double> row, Rng& rng) {
  std::fill(row.begin(), row.end(), 0.0);
  row[uniform_index(rng, row.size())] = 1.0;
}

inline void renormalize(std::span<double> row) {
  double total = 0.0;
  for (double& v : row) {
    if (v < 0.0) v = 0.0;
    total += v;
  }
  for (double& v : row) v /= total;
}

inline double step_size(Rng& rng) {
  if (uniform01(rng) < 0.15) return 1.0;
  return std::pow(10.0, -4.0 * uniform01(rng));
}

// One random perturbation of one conditional row.
inline void perturb(std::span<double> row, Rng& rng) {
  const std::size_t n = row.size();
  const double kind = uniform01(rng);
  if (kind < 0.4) {
    std::size_t from;
    do {
      from = uniform_index(rng, n);
    } while (row[from] <= 0.0);
    std::size_t to = uniform_index(rng, n - 1);
    if (to >= from) ++to;
    const double delta = row[from] * step_size(rng);
    row[from] -= delta;
    row[to] += delta;
  } else if (kind < 0.7) {
    const double s = step_size(rng);
    const std::size_t j = uniform_index(rng, n);
    for (std::size_t i = 0; i < n; ++i) row[i] = (1.0 - s) * row[i] + (i == j ? s : 0.0);
  } else if (kind < 0.9) {
    const double s = step_size(rng);
    std::vector<double> target(n);
    dirichlet_row(target, rng);
    for (std::size_t i = 0; i < n; ++i) row[i] = (1.0 - s) * row[i] + s * target[i];
  } else {
    vertex_row(row, rng);
  }
  renormalize(row);
}

struct Cell {
  double weight_r1;
  double slice;
  std::size_t restart;
  std::uint64_t seed;
};

// `respond` replaces the decoder block (kernels[1]) with the deterministic
// decoder minimizing expected distortion given the encoder block.
template <class Evaluate, class Respond>
std::vector<Candidate> local_search(KernelPair kernels, const Cell& cell, std::size_t iterations,
                                    const Evaluate& evaluate, const Respond& respond) {
  Rng rng(cell.seed);
  for (auto& block : kernels) {
    for (std::size_t r = 0; r < block.rows; ++r) {
      if (cell.restart % 2 == 0) {
        dirichlet_row(block.row(r), rng);
      } else {
        vertex_row(block.row(r), rng);
      }
    }
  }
  auto score_of = [&](const RateDistortionTriple& t) {
    return Score{std::max(0.0, t.d - cell.slice - kSliceTolerance),
                 cell.weight_r1 * t.r1 + (1.0 - cell.weight_r1) * t.r2, t.r1 + t.r2};
  };

  std::vector<Candidate> found;
  RateDistortionTriple current = evaluate(kernels);
  Score current_score = score_of(current);
  insert_pareto(found, current, kernels, cell.seed);

  std::vector<std::size_t> movable;
  for (std::size_t b = 0; b < kernels.size(); ++b)
    if (kernels[b].row_len > 1 && kernels[b].rows > 0) movable.push_back(b);
  if (movable.empty()) return found;

  std::vector<double> saved;
  auto try_row = [&](KernelBlock& block, std::size_t r, auto&& mutate) {
    auto row = block.row(r);
    saved.assign(row.begin(), row.end());
    mutate(row);
    const RateDistortionTriple t = evaluate(kernels);
    const Score s = score_of(t);
    if (better(s, current_score)) {
      current = t;
      current_score = s;
      insert_pareto(found, current, kernels, cell.seed);
    } else {
      std::copy(saved.begin(), saved.end(), row.begin());
    }
  };

  std::vector<double> saved_decoder;
  auto try_compound = [&](bool perturb_encoder) {
    KernelBlock& encoder = kernels[0];
    const std::size_t r = uniform_index(rng, encoder.rows);
    saved.assign(encoder.row(r).begin(), encoder.row(r).end());
    saved_decoder = kernels[1].values;
    if (perturb_encoder && encoder.row_len > 1) perturb(encoder.row(r), rng);
    respond(kernels);
    const RateDistortionTriple t = evaluate(kernels);
    const Score s = score_of(t);
    if (better(s, current_score)) {
      current = t;
      current_score = s;
      insert_pareto(found, current, kernels, cell.seed);
    } else {
      std::copy(saved.begin(), saved.end(), encoder.row(r).begin());
      kernels[1].values = saved_decoder;
    }
  };

  for (std::size_t it = 0; it < iterations; ++it) {
    const double kind = uniform01(rng);
    if (kind < 0.03) {
      try_compound(false);
    } else if (kind < 0.15) {
      try_compound(true);
    } else {
      KernelBlock& block = kernels[movable[uniform_index(rng, movable.size())]];
      try_row(block, uniform_index(rng, block.rows), [&](std::span<double> row) { perturb(row, rng); });
    }
  }
  // Polish: snap each row to its most likely symbol when that helps.
  for (std::size_t b : movable) {
    for (std::size_t r = 0; r < kernels[b].rows; ++r) {
      try_row(kernels[b], r, [](std::span<double> row) {
        const auto top = std::max_element(row.begin(), row.end()) - row.begin();
        std::fill(row.begin(), row.end(), 0.0);
        row[top] = 1.0;
      });
    }
  }
  return found;
}

inline std::vector<Cell> make_cells(const SearchBudget& budget, const std::vector<double>& slices,
                                    std::uint64_t domain) {
  if (budget.restarts == 0 || budget.iterations == 0 || budget.rate_weights.empty()) {
    throw ValidationError("search budget must allow at least one restart, iteration and rate weight");
  }
  for (double w : budget.rate_weights)
    if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("rate weights must lie in [0, 1]");
  for (double s : slices)
    if (!(s >= 0.0) || !std::isfinite(s)) throw ValidationError("distortion slices must be finite and >= 0");
  std::vector<Cell> cells;
  for (std::size_t w = 0; w < budget.rate_weights.size(); ++w)
    for (std::size_t s = 0; s < slices.size(); ++s)
      for (std::size_t r = 0; r < budget.restarts; ++r)
        cells.push_back({budget.rate_weights[w], slices[s], r, derive_seed(budget.seed, {domain, w, s, r})});
  return cells;
}

inline std::vector<Candidate> prune_candidates(std::vector<Candidate> all) {
  return pareto_prune(std::move(all), [](const Candidate& c) -> const RateDistortionTriple& { return c.triple; });
}

// Runs every cell, parallel across threads; results are merged in cell order
// so the outcome does not depend on scheduling.
template <class Evaluate, class Respond>
std::vector<Candidate> run_cells(const KernelPair& shape, const std::vector<Cell>& cells, const SearchBudget& budget,
                                 const Evaluate& evaluate, const Respond& respond) {
  std::vector<std::vector<Candidate>> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      results[i] = local_search(shape, cells[i], budget.iterations, evaluate, respond);
    }
  };
  std::size_t threads = budget.threads ? budget.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, cells.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<Candidate> all;
  for (auto& r : results)
    for (auto& c : r) all.push_back(std::move(c));
  return prune_candidates(std::move(all));
}

// Deterministic decoder z(y, w) minimizing E d given the encoder output W
// (W = U for outer systems, W = (U, V) for inner ones). Rows never reached
// keep their current values.
template <class EncoderProb>
void best_decoder(const JointSource& source, const DistortionFn& dist, std::size_t size_w,
                  const EncoderProb& encoder, KernelBlock& decoder) {
  const std::size_t nz = dist.size_z();
  std::vector<double> cost(nz);
  for (std::size_t y = 0; y < source.size_y(); ++y) {
    for (std::size_t w = 0; w < size_w; ++w) {
      std::fill(cost.begin(), cost.end(), 0.0);
      double mass = 0.0;
      for (std::size_t x = 0; x < source.size_x(); ++x) {
        const double p = source(x, y) * encoder(x, w);
        if (p <= 0.0) continue;
        mass += p;
        for (std::size_t z = 0; z < nz; ++z) cost[z] += p * dist(x, y, z);
      }
      if (mass <= 0.0) continue;
      auto row = decoder.row(y * size_w + w);
      std::fill(row.begin(), row.end(), 0.0);
      row[std::min_element(cost.begin(), cost.end()) - cost.begin()] = 1.0;
    }
  }
}

// Blahut-Arimoto for the ordinary rate-distortion problem of the pair
// S = (X, Y) reproduced as Z, at slope -beta. Returns p(z|x,y) as [x][y][z].
inline std::vector<double> blahut_arimoto(const JointSource& source, const DistortionFn& dist, double beta,
                                          std::size_t iterations = 2000) {
  const std::size_t ns = source.size_x() * source.size_y(), nz = dist.size_z();
  std::vector<double> q(nz, 1.0 / static_cast<double>(nz)), channel(ns * nz), next(nz);
  for (std::size_t it = 0; it < iterations; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < ns; ++s) {
      const std::size_t x = s / source.size_y(), y = s % source.size_y();
      double lo = dist(x, y, 0);
      for (std::size_t z = 1; z < nz; ++z) lo = std::min(lo, dist(x, y, z));
      double total = 0.0;
      for (std::size_t z = 0; z < nz; ++z) {
        channel[s * nz + z] = q[z] * std::exp(-beta * (dist(x, y, z) - lo));
        total += channel[s * nz + z];
      }
      for (std::size_t z = 0; z < nz; ++z) {
        channel[s * nz + z] /= total;
        next[z] += source(x, y) * channel[s * nz + z];
      }
    }
    double change = 0.0;
    for (std::size_t z = 0; z < nz; ++z) change = std::max(change, std::abs(next[z] - q[z]));
    q.swap(next);
    if (change < 1e-14) break;
  }
  return channel;
}

// Test channels along the rate-distortion curve of (X, Y) -> Z, bracketing
// the requested slice by bisection on the slope. The zero-rate constant
// decoder is included.
inline std::vector<std::vector<double>> rate_distortion_channels(const JointSource& source, const DistortionFn& dist,
                                                                 double slice) {
  const std::size_t nx = source.size_x(), ny = source.size_y(), nz = dist.size_z();
  std::vector<std::vector<double>> out;
  auto distortion_of = [&](const std::vector<double>& ch) {
    double d = 0.0;
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t z = 0; z < nz; ++z) d += source(x, y) * ch[(x * ny + y) * nz + z] * dist(x, y, z);
    return d;
  };
  std::size_t best_z = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t z = 0; z < nz; ++z) {
    double d = 0.0;
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) d += source(x, y) * dist(x, y, z);
    if (d < best_d) best_d = d, best_z = z;
  }
  std::vector<double> constant(nx * ny * nz, 0.0);
  for (std::size_t s = 0; s < nx * ny; ++s) constant[s * nz + best_z] = 1.0;
  out.push_back(std::move(constant));
  if (best_d <= slice) return out;

  double lo = 0.0, hi = 1.0;
  for (; hi < 1e7; hi *= 2.0) {
    out.push_back(blahut_arimoto(source, dist, hi));
    if (distortion_of(out.back()) <= slice + kSliceTolerance) break;
  }
  for (int step = 0; step < 40 && hi < 1e7; ++step) {
    const double mid = 0.5 * (lo + hi);
    auto ch = blahut_arimoto(source, dist, mid);
    if (distortion_of(ch) <= slice + kSliceTolerance) {
      hi = mid;
      out.push_back(std::move(ch));
    } else {
      lo = mid;
    }
  }
  return out;
}

inline KernelBlock block_of(std::size_t rows, std::size_t row_len) {
  return {rows, row_len, std::vector<double>(rows * row_len, 1.0 / static_cast<double>(row_len))};
}

}  // namespace detail

/// Pareto frontier of inner-region points found by local search. Every point
/// is certified by its witness system; the frontier is never claimed complete.
inline RegionFrontier optimize_inner_frontier(const JointSource& source, const DistortionFn& dist,
                                              const InnerCardinalities& cards, const SearchBudget& budget) {
  dist.require_compatible(source);
  if (!cards.size_u || !cards.size_v || !cards.size_z) throw ValidationError("cardinalities must be >= 1");
  if (cards.size_z != dist.size_z()) throw ValidationError("|Z| must match the distortion function");
  const std::size_t nx = source.size_x(), ny = source.size_y();
  const std::size_t nu = cards.size_u, nv = cards.size_v, nz = cards.size_z;

  RegionFrontier frontier;
  frontier.kind = FrontierKind::inner;
  frontier.slices = resolve_slices(source, dist, budget);
  const auto cells = detail::make_cells(budget, frontier.slices, 1);
  const detail::KernelPair shape{detail::block_of(nx, nu * nv), detail::block_of(ny * nu * nv, nz)};
  auto evaluate = [&](const detail::KernelPair& k) {
    return detail::inner_triple(source, dist, nu, nv, k[0].values, k[1].values);
  };
  auto respond = [&](detail::KernelPair& k) {
    detail::best_decoder(source, dist, nu * nv, [&](std::size_t x, std::size_t uv) { return k[0].values[x * nu * nv + uv]; },
                         k[1]);
  };
  auto candidates = detail::run_cells(shape, cells, budget, evaluate, respond);
  // U trivial, V = X: R2 reduces to I(X,Y;Z), so rate-distortion channels of
  // (X, Y) -> Z are inner points.
  if (budget.seed_with_rate_distortion && nv >= nx) {
    for (std::size_t s = 0; s < frontier.slices.size(); ++s) {
      for (const auto& ch : detail::rate_distortion_channels(source, dist, frontier.slices[s])) {
        detail::KernelPair k = shape;
        std::fill(k[0].values.begin(), k[0].values.end(), 0.0);
        for (std::size_t x = 0; x < nx; ++x) k[0].values[x * nu * nv + x] = 1.0;  // u = 0, v = x
        for (std::size_t y = 0; y < ny; ++y)
          for (std::size_t x = 0; x < nx; ++x)
            std::copy_n(ch.begin() + (x * ny + y) * nz, nz, k[1].values.begin() + (y * nu * nv + x) * nz);
        candidates.push_back({evaluate(k), std::move(k), derive_seed(budget.seed, {1, 0xBA, s})});
      }
    }
    candidates = detail::prune_candidates(std::move(candidates));
  }
  for (auto& c : candidates) {
    frontier.points.push_back(
        {c.triple, AuxiliarySystem(nx, ny, nu, nv, nz, std::move(c.kernels[0].values), std::move(c.kernels[1].values)),
         c.seed});
  }
  return frontier;
}

/// Lowest (R1, R2) found over the outer constraint set at each slice. This is
/// a heuristic minimum: a failed search can only make it look looser.
inline RegionFrontier optimize_outer_frontier(const JointSource& source, const DistortionFn& dist,
                                              const OuterCardinalities& cards, const SearchBudget& budget) {
  dist.require_compatible(source);
  if (!cards.size_u || !cards.size_z) throw ValidationError("cardinalities must be >= 1");
  if (cards.size_z != dist.size_z()) throw ValidationError("|Z| must match the distortion function");
  const std::size_t nx = source.size_x(), ny = source.size_y(), nu = cards.size_u, nz = cards.size_z;

  RegionFrontier frontier;
  frontier.kind = FrontierKind::outer;
  frontier.heuristic_minimum = true;
  frontier.slices = resolve_slices(source, dist, budget);
  const auto cells = detail::make_cells(budget, frontier.slices, 2);
  const detail::KernelPair shape{detail::block_of(nx, nu), detail::block_of(ny * nu, nz)};
  auto evaluate = [&](const detail::KernelPair& k) {
    return detail::outer_triple(source, dist, nu, k[0].values, k[1].values);
  };
  auto respond = [&](detail::KernelPair& k) {
    detail::best_decoder(source, dist, nu, [&](std::size_t x, std::size_t u) { return k[0].values[x * nu + u]; }, k[1]);
  };
  auto candidates = detail::run_cells(shape, cells, budget, evaluate, respond);
  // With U = X every channel p(z|x,y) is reachable, so the minimum of R2 is
  // the ordinary rate-distortion function of (X, Y) -> Z.
  if (budget.seed_with_rate_distortion && nu >= nx) {
    for (std::size_t s = 0; s < frontier.slices.size(); ++s) {
      for (const auto& ch : detail::rate_distortion_channels(source, dist, frontier.slices[s])) {
        detail::KernelPair k = shape;
        std::fill(k[0].values.begin(), k[0].values.end(), 0.0);
        for (std::size_t x = 0; x < nx; ++x) k[0].values[x * nu + x] = 1.0;
        for (std::size_t y = 0; y < ny; ++y)
          for (std::size_t x = 0; x < nx; ++x)
            std::copy_n(ch.begin() + (x * ny + y) * nz, nz, k[1].values.begin() + (y * nu + x) * nz);
        candidates.push_back({evaluate(k), std::move(k), derive_seed(budget.seed, {2, 0xBA, s})});
      }
    }
    candidates = detail::prune_candidates(std::move(candidates));
  }
  for (auto& c : candidates) {
    frontier.points.push_back(
        {c.triple, OuterSystem(nx, ny, nu, nz, std::move(c.kernels[0].values), std::move(c.kernels[1].values)),
         c.seed});
  }
  return frontier;
}

// ---------------------------------------------------------------------------
// Lossless computation and Markov coordination

struct LosslessResult {
  RateDistortionTriple triple;
  AuxiliarySystem witness;
};

/// Rates for computing z = f(x,y) exactly at the decoder. Runs the inner search
/// with U trivial, Hamming distortion against f, and a single D = 0 slice, and
/// returns the found point with the smallest R1 + R2.
inline LosslessResult lossless_function_rates(const JointSource& source, std::span<const std::size_t> f,
                                              SearchBudget budget, std::optional<std::size_t> size_v = {}) {
  const DistortionFn dist = DistortionFn::hamming_to_function(source.size_x(), source.size_y(), f);
  budget.distortion_slices = {0.0};
  const InnerCardinalities cards{1, size_v.value_or(source.size_x() + 2), dist.size_z()};
  const RegionFrontier frontier = optimize_inner_frontier(source, dist, cards, budget);
  const FrontierPoint* best = frontier.best_at(0.0, 0.5);
  if (!best) throw std::runtime_error("lossless_function_rates: search found no zero-distortion system");
  return {best->triple, std::get<AuxiliarySystem>(best->witness)};
}

enum class MarkovChain { x_y_z, y_x_z };

struct RatePair {
  double r1;
  double r2;
};

/// Closed-form rates for coordination p0(x,y) p(z|x,y) along a Markov chain:
/// X-Y-Z needs (0, I(Y;Z)); Y-X-Z needs (I(X;Z|Y), I(X;Z)).
/// The kernel is indexed [x][y][z] and must respect the declared chain on the
/// support of p0.
inline RatePair markov_rates(const JointSource& source, MarkovChain chain, std::span<const double> z_given_xy,
                             std::size_t size_z) {
  const std::size_t nx = source.size_x(), ny = source.size_y();
  if (size_z == 0) throw ValidationError("markov_rates: |Z| must be positive");
  detail::validate_rows(z_given_xy, nx * ny, size_z, "markov_rates p(z|x,y)");
  auto row = [&](std::size_t x, std::size_t y) { return z_given_xy.subspan((x * ny + y) * size_z, size_z); };

  // Rows sharing the chain's middle variable must agree wherever p0 > 0.
  const bool middle_is_y = chain == MarkovChain::x_y_z;
  const std::size_t outer_count = middle_is_y ? ny : nx;
  const std::size_t inner_count = middle_is_y ? nx : ny;
  for (std::size_t m = 0; m < outer_count; ++m) {
    std::optional<std::span<const double>> ref;
    for (std::size_t o = 0; o < inner_count; ++o) {
      const std::size_t x = middle_is_y ? o : m;
      const std::size_t y = middle_is_y ? m : o;
      if (source(x, y) <= 0.0) continue;
      if (!ref) {
        ref = row(x, y);
        continue;
      }
      for (std::size_t z = 0; z < size_z; ++z) {
        if (std::abs((*ref)[z] - row(x, y)[z]) > kPmfTolerance) {
          throw ValidationError("markov_rates: kernel violates the declared Markov chain");
        }
      }
    }
  }

  std::vector<double> p;
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t z = 0; z < size_z; ++z) p.push_back(source(x, y) * row(x, y)[z]);
  const Distribution joint = Distribution::assemble({nx, ny, size_z}, std::move(p));
  const std::size_t X[1] = {0}, Y[1] = {1}, Z[1] = {2};
  if (middle_is_y) return {0.0, conditional_mutual_information(joint, Y, Z)};
  return {conditional_mutual_information(joint, X, Z, Y), conditional_mutual_information(joint, X, Z)};
}

/// Expands p(z|x) to the [x][y][z] layout used by markov_rates.
inline std::vector<double> kernel_from_x(const JointSource& source, std::span<const double> z_given_x,
                                         std::size_t size_z) {
  detail::validate_rows(z_given_x, source.size_x(), size_z, "p(z|x)");
  std::vector<double> out;
  for (std::size_t x = 0; x < source.size_x(); ++x)
    for (std::size_t y = 0; y < source.size_y(); ++y)
      out.insert(out.end(), z_given_x.begin() + x * size_z, z_given_x.begin() + (x + 1) * size_z);
  return out;
}

/// Inner system with U = Z (drawn from p(z|x) at Encoder 1), V trivial, and
/// the decoder reproducing U. For Y-X-Z chains it meets the closed-form rates.
inline AuxiliarySystem markov_inner_witness(const JointSource& source, std::span<const double> z_given_x,
                                            std::size_t size_z) {
  detail::validate_rows(z_given_x, source.size_x(), size_z, "p(z|x)");
  const std::size_t nx = source.size_x(), ny = source.size_y();
  std::vector<double> uv(z_given_x.begin(), z_given_x.end());
  std::vector<double> zk(ny * size_z * size_z, 0.0);
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t u = 0; u < size_z; ++u) zk[(y * size_z + u) * size_z + u] = 1.0;
  return AuxiliarySystem(nx, ny, size_z, 1, size_z, std::move(uv), std::move(zk));
}

}  // namespace cascade::region
