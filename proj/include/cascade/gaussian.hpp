#pragma once

// Closed-form rate-distortion expressions for estimating X + Y at the decoder
// when (X, Y) is zero-mean jointly Gaussian and distortion is squared error.
//
// The inner bound restricted to jointly Gaussian auxiliaries uses one of two
// strategies at Encoder 2: recompress (decode an estimate of X and compress
// it together with Y) or forward (relay Encoder 1's description untouched).

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "cascade/model.hpp"

namespace cascade::gaussian {

enum class Strategy { recompress, forward };

inline const char* to_string(Strategy s) { return s == Strategy::recompress ? "recompress" : "forward"; }

struct StrategyChoice {
  Strategy choice;
  double threshold;  // 0.5 log2(Px / Py), bits/symbol
};

enum class Regime { low_distortion, high_distortion };

inline const char* to_string(Regime r) { return r == Regime::low_distortion ? "low" : "high"; }

struct SumRateBound {
  double rate;
  Regime regime;
};

struct RateSplit {
  double r1;
  double r2;
};

// Rates above this are treated as infinite: 2^(-2R) is clamped to exactly 0.
inline constexpr double kMaxRate = 64.0;

namespace detail {

inline void require_rate(double r, const char* what) {
  if (std::isnan(r) || r < 0.0) throw ValidationError(std::string(what) + ": rates must be >= 0");
}

// 2^(-2r), clamped to 0 beyond kMaxRate.
inline double decay(double r) { return r > kMaxRate ? 0.0 : std::exp2(-2.0 * r); }

inline void require_sumrate_domain(const GaussianPair& pair, double d, const char* what) {
  if (pair.px() > pair.py()) throw DomainError(std::string(what) + ": requires Px <= Py");
  if (!(d > 0.0) || d > pair.sum_variance()) {
    throw DomainError(std::string(what) + ": distortion must lie in (0, Var(X+Y)]");
  }
}

}  // namespace detail

inline double sum_variance(const GaussianPair& pair) { return pair.sum_variance(); }

/// Recompress iff r1 >= 0.5 log2(Px/Py); the boundary belongs to recompress.
inline StrategyChoice strategy_threshold(const GaussianPair& pair, double r1) {
  detail::require_rate(r1, "strategy_threshold");
  const double threshold = 0.5 * std::log2(pair.px() / pair.py());
  return {r1 >= threshold ? Strategy::recompress : Strategy::forward, threshold};
}

inline double recompress_distortion(const GaussianPair& pair, double r1, double r2) {
  detail::require_rate(r1, "recompress_distortion");
  detail::require_rate(r2, "recompress_distortion");
  const double a = detail::decay(r1);
  const double b = detail::decay(r2);
  return pair.conditional_variance_x() * (1.0 - b) * a + b * pair.sum_variance();
}

/// R2 at which the forward strategy switches from relay-limited to
/// source-limited: 0.5 log2((2^(2 R1) - rho^2) / (1 - rho^2)).
inline double forward_subcase_boundary(const GaussianPair& pair, double r1) {
  detail::require_rate(r1, "forward_subcase_boundary");
  const double rho2 = pair.rho() * pair.rho();
  if (rho2 >= 1.0) throw DegenerateCorrelationError("forward strategy undefined for |rho| = 1");
  if (r1 > kMaxRate) return std::numeric_limits<double>::infinity();
  return 0.5 * std::log2((std::exp2(2.0 * r1) - rho2) / (1.0 - rho2));
}

/// Forward distortion when R2 is saturated by the forwarded description.
inline double forward_distortion_rate_limited(const GaussianPair& pair, double r2) {
  detail::require_rate(r2, "forward_distortion");
  const double rho2 = pair.rho() * pair.rho();
  const double b = detail::decay(r2);
  // 2^(-2 R2) (2^(2 R2) - 1) = 1 - 2^(-2 R2)
  return b * pair.sum_variance() + (1.0 - rho2) * (1.0 - b) * pair.py();
}

/// Forward distortion when R1 limits the forwarded description and the excess
/// of R2 describes Y.
inline double forward_distortion_source_limited(const GaussianPair& pair, double r1, double r2) {
  detail::require_rate(r1, "forward_distortion");
  detail::require_rate(r2, "forward_distortion");
  const double rho2 = pair.rho() * pair.rho();
  const double a = detail::decay(r1);
  const double b = detail::decay(r2);
  const double grow = r1 > kMaxRate ? std::numeric_limits<double>::infinity() : std::exp2(2.0 * r1) - 1.0;
  const double y_term = b == 0.0 ? 0.0 : b * grow * pair.py();
  return ((1.0 - rho2) * a - (1.0 - rho2 * a) * b) * pair.px() + b * pair.sum_variance() + y_term;
}

inline double forward_distortion(const GaussianPair& pair, double r1, double r2) {
  detail::require_rate(r1, "forward_distortion");
  detail::require_rate(r2, "forward_distortion");
  if (r2 <= forward_subcase_boundary(pair, r1)) return forward_distortion_rate_limited(pair, r2);
  return forward_distortion_source_limited(pair, r1, r2);
}

/// Both strategies at the same rates; forward is absent when |rho| = 1.
struct BranchDistortions {
  double recompress;
  std::optional<double> forward;
};

inline BranchDistortions inner_bound_branches(const GaussianPair& pair, double r1, double r2) {
  BranchDistortions out{recompress_distortion(pair, r1, r2), std::nullopt};
  if (std::abs(pair.rho()) < 1.0) out.forward = forward_distortion(pair, r1, r2);
  return out;
}

/// Distortion achieved by the inner bound restricted to Gaussian auxiliaries.
inline double inner_bound_distortion(const GaussianPair& pair, double r1, double r2) {
  detail::require_rate(r2, "inner_bound_distortion");
  if (strategy_threshold(pair, r1).choice == Strategy::recompress) return recompress_distortion(pair, r1, r2);
  return forward_distortion(pair, r1, r2);
}

/// Cut-set lower bound on distortion.
inline double outer_bound_distortion(const GaussianPair& pair, double r1, double r2) {
  detail::require_rate(r1, "outer_bound_distortion");
  detail::require_rate(r2, "outer_bound_distortion");
  return std::max(detail::decay(r1) * pair.conditional_variance_x(), detail::decay(r2) * pair.sum_variance());
}

/// R2 - R1 at the sum-rate optimum of the recompress distortion.
inline double optimal_rate_gap(const GaussianPair& pair) {
  const double cond = pair.conditional_variance_x();
  if (cond <= 0.0) return std::numeric_limits<double>::infinity();
  return 0.5 * std::log2(pair.sum_variance() / cond);
}

/// Split of a total rate minimizing the recompress distortion. Below the
/// optimal gap the whole budget goes to R2.
inline RateSplit optimal_rate_split(const GaussianPair& pair, double total_rate) {
  if (pair.px() > pair.py()) throw DomainError("optimal_rate_split: requires Px <= Py");
  detail::require_rate(total_rate, "optimal_rate_split");
  const double gap = optimal_rate_gap(pair);
  if (total_rate < gap) return {0.0, total_rate};
  const double r1 = 0.5 * (total_rate - gap);
  return {r1, total_rate - r1};
}

inline SumRateBound sumrate_upper(const GaussianPair& pair, double d) {
  detail::require_sumrate_domain(pair, d, "sumrate_upper");
  const double s = pair.sum_variance();
  const double c = pair.conditional_variance_x();
  if (d <= c * (2.0 - c / s)) {
    const double rate = 0.5 * std::log2(s / d) + 0.5 * std::log2(c / d) +
                        std::log2(1.0 + std::sqrt(std::max(0.0, 1.0 - d / s)));
    return {std::max(0.0, rate), Regime::low_distortion};
  }
  if (d - c <= 0.0) throw DomainError("sumrate_upper: high-distortion denominator is not positive");
  return {std::max(0.0, 0.5 * std::log2((s - c) / (d - c))), Regime::high_distortion};
}

inline SumRateBound sumrate_lower(const GaussianPair& pair, double d) {
  detail::require_sumrate_domain(pair, d, "sumrate_lower");
  const double s = pair.sum_variance();
  const double c = pair.conditional_variance_x();
  if (d <= c) return {std::max(0.0, 0.5 * std::log2(s / d) + 0.5 * std::log2(c / d)), Regime::low_distortion};
  return {std::max(0.0, 0.5 * std::log2(s / d)), Regime::high_distortion};
}

/// Upper minus lower sum-rate bound; at most one bit when Px <= Py.
inline double sumrate_gap(const GaussianPair& pair, double d) {
  return sumrate_upper(pair, d).rate - sumrate_lower(pair, d).rate;
}

}  // namespace cascade::gaussian
