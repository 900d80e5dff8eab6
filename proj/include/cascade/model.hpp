#pragma once

// Core types for the cascade network (Encoder 1 -> Encoder 2 -> Decoder) and
// exact information measures on dense finite distributions.
//
// All logarithms are base 2, so every rate is in bits/symbol.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cascade {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the domain where a closed form is defined.
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// |rho| = 1 where a formula divides by 1 - rho^2.
class DegenerateCorrelationError : public DomainError {
 public:
  using DomainError::DomainError;
};

inline constexpr double kPmfTolerance = 1e-12;
// Probabilities below this are exact zeros for entropy purposes.
inline constexpr double kZeroProbability = 1e-15;

namespace detail {

inline void validate_pmf(std::span<const double> p, const std::string& what) {
  if (p.empty()) throw ValidationError(what + ": empty distribution");
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError(what + ": entries must be finite and non-negative");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > kPmfTolerance) {
    throw ValidationError(what + ": entries sum to " + std::to_string(total) + ", expected 1");
  }
}

inline double plogp_sum(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > kZeroProbability) h -= v * std::log2(v);
  }
  return h;
}

}  // namespace detail

/// Shannon entropy in bits, 0 log 0 = 0.
inline double entropy(std::span<const double> pmf) {
  detail::validate_pmf(pmf, "entropy");
  return std::max(0.0, detail::plogp_sum(pmf));
}

inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("binary_entropy: p must lie in [0, 1]");
  const double q[2] = {p, 1.0 - p};
  return std::max(0.0, detail::plogp_sum(q));
}

/// Dense joint pmf over several finite variables, stored row-major (the last
/// variable varies fastest).
class Distribution {
 public:
  Distribution(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_.empty()) throw ValidationError("Distribution: at least one variable required");
    std::size_t n = 1;
    for (std::size_t s : shape_) {
      if (s == 0) throw ValidationError("Distribution: alphabet sizes must be positive");
      n *= s;
    }
    if (n != values_.size()) throw ValidationError("Distribution: shape does not match value count");
    detail::validate_pmf(values_, "Distribution");
  }

  // Skips validation; for joints assembled from already-validated factors.
  static Distribution assemble(std::vector<std::size_t> shape, std::vector<double> values) {
    return Distribution(Unchecked{}, std::move(shape), std::move(values));
  }

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::span<const double> values() const { return values_; }

  /// Marginal over the listed variables, in the listed order.
  Distribution marginal(std::span<const std::size_t> keep) const {
    for (std::size_t k : keep) {
      if (k >= rank()) throw ValidationError("marginal: variable index out of range");
    }
    std::vector<std::size_t> out_shape;
    for (std::size_t k : keep) out_shape.push_back(shape_[k]);
    if (out_shape.empty()) return assemble({1}, {1.0});

    std::vector<std::size_t> out_stride(keep.size(), 1);
    for (std::size_t i = keep.size(); i-- > 1;) out_stride[i - 1] = out_stride[i] * out_shape[i];
    std::vector<std::size_t> weight(rank(), 0);
    for (std::size_t i = 0; i < keep.size(); ++i) weight[keep[i]] += out_stride[i];

    std::size_t out_size = 1;
    for (std::size_t s : out_shape) out_size *= s;
    std::vector<double> out(out_size, 0.0);

    std::vector<std::size_t> digit(rank(), 0);
    std::size_t target = 0;
    for (double v : values_) {
      out[target] += v;
      for (std::size_t axis = rank(); axis-- > 0;) {
        target += weight[axis];
        if (++digit[axis] < shape_[axis]) break;
        target -= weight[axis] * shape_[axis];
        digit[axis] = 0;
      }
    }
    return assemble(std::move(out_shape), std::move(out));
  }

  double entropy() const { return std::max(0.0, detail::plogp_sum(values_)); }

  double marginal_entropy(std::span<const std::size_t> keep) const {
    if (keep.empty()) return 0.0;
    return marginal(keep).entropy();
  }

 private:
  struct Unchecked {};
  Distribution(Unchecked, std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {}

  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

/// I(A;B) for a two-variable joint.
inline double mutual_information(const Distribution& joint) {
  if (joint.rank() != 2) throw ValidationError("mutual_information: expected a two-variable joint");
  const std::size_t a[1] = {0};
  const std::size_t b[1] = {1};
  const double i = joint.marginal_entropy(a) + joint.marginal_entropy(b) - joint.entropy();
  return std::max(0.0, i);
}

/// I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C).
inline double conditional_mutual_information(const Distribution& joint,
                                             std::span<const std::size_t> set_a,
                                             std::span<const std::size_t> set_b,
                                             std::span<const std::size_t> set_c = {}) {
  std::vector<int> seen(joint.rank(), 0);
  for (auto set : {set_a, set_b, set_c}) {
    for (std::size_t k : set) {
      if (k >= joint.rank()) throw ValidationError("conditional_mutual_information: index out of range");
      if (seen[k]++) throw ValidationError("conditional_mutual_information: index sets must be disjoint");
    }
  }
  auto join = [](std::initializer_list<std::span<const std::size_t>> parts) {
    std::vector<std::size_t> out;
    for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  const double h_ac = joint.marginal_entropy(join({set_a, set_c}));
  const double h_bc = joint.marginal_entropy(join({set_b, set_c}));
  const double h_abc = joint.marginal_entropy(join({set_a, set_b, set_c}));
  const double h_c = joint.marginal_entropy(set_c);
  return std::max(0.0, h_ac + h_bc - h_abc - h_c);
}

/// Finite-alphabet source p0(x,y).
class JointSource {
 public:
  JointSource(std::size_t size_x, std::size_t size_y, std::vector<double> pmf)
      : size_x_(size_x), size_y_(size_y), pmf_(std::move(pmf)) {
    if (size_x_ == 0 || size_y_ == 0) throw ValidationError("JointSource: alphabet sizes must be positive");
    if (pmf_.size() != size_x_ * size_y_) throw ValidationError("JointSource: pmf size does not match alphabets");
    detail::validate_pmf(pmf_, "JointSource");
  }

  std::size_t size_x() const { return size_x_; }
  std::size_t size_y() const { return size_y_; }
  double operator()(std::size_t x, std::size_t y) const { return pmf_[x * size_y_ + y]; }
  std::span<const double> pmf() const { return pmf_; }

  Distribution joint() const { return Distribution::assemble({size_x_, size_y_}, pmf_); }

 private:
  std::size_t size_x_;
  std::size_t size_y_;
  std::vector<double> pmf_;
};

/// Per-letter distortion d(x,y,z).
class DistortionFn {
 public:
  DistortionFn(std::size_t size_x, std::size_t size_y, std::size_t size_z, std::vector<double> table)
      : size_x_(size_x), size_y_(size_y), size_z_(size_z), table_(std::move(table)) {
    if (size_x_ == 0 || size_y_ == 0 || size_z_ == 0) {
      throw ValidationError("DistortionFn: alphabet sizes must be positive");
    }
    if (table_.size() != size_x_ * size_y_ * size_z_) {
      throw ValidationError("DistortionFn: table size does not match alphabets");
    }
    for (double v : table_) {
      if (!std::isfinite(v) || v < 0.0) throw ValidationError("DistortionFn: entries must be finite and >= 0");
    }
  }

  /// d(x,y,z) = 1{z != f(x,y)} for a function table f indexed [x][y].
  static DistortionFn hamming_to_function(std::size_t size_x, std::size_t size_y,
                                          std::span<const std::size_t> f) {
    if (f.size() != size_x * size_y) throw ValidationError("hamming_to_function: table size mismatch");
    const std::size_t size_z = *std::max_element(f.begin(), f.end()) + 1;
    std::vector<double> table(size_x * size_y * size_z, 1.0);
    for (std::size_t x = 0; x < size_x; ++x)
      for (std::size_t y = 0; y < size_y; ++y) table[(x * size_y + y) * size_z + f[x * size_y + y]] = 0.0;
    return DistortionFn(size_x, size_y, size_z, std::move(table));
  }

  std::size_t size_x() const { return size_x_; }
  std::size_t size_y() const { return size_y_; }
  std::size_t size_z() const { return size_z_; }
  double operator()(std::size_t x, std::size_t y, std::size_t z) const {
    return table_[(x * size_y_ + y) * size_z_ + z];
  }
  std::span<const double> table() const { return table_; }

  void require_compatible(const JointSource& source) const {
    if (source.size_x() != size_x_ || source.size_y() != size_y_) {
      throw ValidationError("DistortionFn: alphabets do not match the source");
    }
  }

 private:
  std::size_t size_x_;
  std::size_t size_y_;
  std::size_t size_z_;
  std::vector<double> table_;
};

/// (R1, R2, D): bits/symbol on each link and the distortion level.
struct RateDistortionTriple {
  double r1 = 0.0;
  double r2 = 0.0;
  double d = 0.0;

  friend bool operator==(const RateDistortionTriple&, const RateDistortionTriple&) = default;
};

inline RateDistortionTriple make_triple(double r1, double r2, double d) {
  if (!(r1 >= 0.0 && r2 >= 0.0 && d >= 0.0)) throw ValidationError("RateDistortionTriple: coordinates must be >= 0");
  return {r1, r2, d};
}

/// Zero-mean jointly Gaussian (X, Y).
class GaussianPair {
 public:
  GaussianPair(double px, double py, double rho) : px_(px), py_(py), rho_(rho) {
    if (!(px > 0.0 && std::isfinite(px)) || !(py > 0.0 && std::isfinite(py))) {
      throw ValidationError("GaussianPair: variances must be positive and finite");
    }
    if (!(rho >= -1.0 && rho <= 1.0)) throw ValidationError("GaussianPair: rho must lie in [-1, 1]");
  }

  double px() const { return px_; }
  double py() const { return py_; }
  double rho() const { return rho_; }

  /// Var(X + Y).
  double sum_variance() const { return std::max(0.0, px_ + py_ + 2.0 * rho_ * std::sqrt(px_ * py_)); }

  /// (1 - rho^2) Px, the variance of X given Y.
  double conditional_variance_x() const { return (1.0 - rho_ * rho_) * px_; }

 private:
  double px_;
  double py_;
  double rho_;
};

}  // namespace cascade
