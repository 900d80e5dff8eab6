#pragma once

// Monte Carlo simulation of the random-coding scheme that achieves the inner
// region: random codebooks for U, V and Z, random binning of U and V, and
// first-match typicality encoding at both encoders.
//
// Two engines run the same experiment:
//  - explicit: materializes every codebook and bin map, then encodes by
//    scanning. Limited by a memory cap on total codeword symbols.
//  - ensemble: draws a fresh codebook per trial but only the parts a trial
//    touches. The index of the first typical codeword is sampled from its
//    truncated geometric law, the codeword itself from the exact law of an
//    i.i.d. sequence conditioned on being typical, and bin collisions from
//    their exact counts. This reaches blocklengths where codebooks hold 2^200
//    sequences.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cascade/model.hpp"
#include "cascade/random.hpp"
#include "cascade/region.hpp"

namespace cascade::sim {

using Sequence = std::vector<std::uint8_t>;

enum class TrialStatus : std::uint8_t { ok, enc1_u_fail, enc1_v_fail, enc2_u_ambiguous, enc2_v_ambiguous, enc2_z_fail };
inline constexpr std::size_t kStatusCount = 6;

inline const char* to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::ok: return "ok";
    case TrialStatus::enc1_u_fail: return "enc1_u_fail";
    case TrialStatus::enc1_v_fail: return "enc1_v_fail";
    case TrialStatus::enc2_u_ambiguous: return "enc2_u_ambiguous";
    case TrialStatus::enc2_v_ambiguous: return "enc2_v_ambiguous";
    case TrialStatus::enc2_z_fail: return "enc2_z_fail";
  }
  return "unknown";
}

enum class Engine { explicit_codebooks, ensemble };

inline const char* to_string(Engine e) { return e == Engine::explicit_codebooks ? "explicit" : "ensemble"; }

inline Engine parse_engine(const std::string& s) {
  if (s == "explicit") return Engine::explicit_codebooks;
  if (s == "ensemble") return Engine::ensemble;
  throw ValidationError("unknown engine '" + s + "' (expected explicit or ensemble)");
}

// ---------------------------------------------------------------------------
// Typicality

/// Integer counts N with |N/n - p| <= eps p. A zero-probability cell only
/// admits N = 0.
struct CountRange {
  std::int64_t lo;
  std::int64_t hi;
  bool contains(std::int64_t k) const { return k >= lo && k <= hi; }
};

inline CountRange typical_range(std::size_t n, double p, double eps) {
  if (p <= kZeroProbability) return {0, 0};
  const double np = static_cast<double>(n) * p;
  const auto lo = static_cast<std::int64_t>(std::ceil(np * (1.0 - eps) - 1e-9));
  const auto hi = static_cast<std::int64_t>(std::floor(np * (1.0 + eps) + 1e-9));
  return {std::max<std::int64_t>(0, lo), hi};
}

/// Robust strong typicality of a tuple of sequences with respect to a joint
/// pmf whose variables follow the tuple order.
inline bool is_jointly_typical(const std::vector<std::span<const std::uint8_t>>& seqs, const Distribution& joint,
                               double eps) {
  if (seqs.size() != joint.rank()) throw ValidationError("is_jointly_typical: need one sequence per variable");
  if (!(eps > 0.0)) throw ValidationError("is_jointly_typical: epsilon must be positive");
  const std::size_t n = seqs.front().size();
  for (const auto& s : seqs)
    if (s.size() != n) throw ValidationError("is_jointly_typical: sequences differ in length");
  std::vector<std::size_t> counts(joint.values().size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cell = 0;
    for (std::size_t k = 0; k < seqs.size(); ++k) {
      const std::size_t sym = seqs[k][i];
      if (sym >= joint.shape()[k]) throw ValidationError("is_jointly_typical: symbol outside the joint's alphabet");
      cell = cell * joint.shape()[k] + sym;
    }
    ++counts[cell];
  }
  for (std::size_t cell = 0; cell < counts.size(); ++cell) {
    if (!typical_range(n, joint.values()[cell], eps).contains(static_cast<std::int64_t>(counts[cell]))) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Configuration and derived quantities

struct SimConfig {
  std::size_t n = 0;
  double epsilon = 0.1;
  std::optional<double> bin_epsilon;  // slack in the bin exponents; default 2 epsilon, negative undersizes bins
  JointSource source;
  DistortionFn dist;
  region::AuxiliarySystem aux;
  std::size_t trials = 0;
  std::size_t batches = 1;
  std::uint64_t seed = 1;
  double d_target = 0.0;
  Engine engine = Engine::explicit_codebooks;
  std::uint64_t memory_cap = std::uint64_t{1} << 28;  // total codeword symbols, explicit engine

  double bin_slack() const { return bin_epsilon.value_or(2.0 * epsilon); }
};

/// Information quantities of the auxiliary joint that set codebook and bin
/// sizes.
struct InformationProfile {
  double x_u;            // I(X;U)
  double x_v_given_u;    // I(X;V|U)
  double yv_z_given_u;   // I(Y,V;Z|U)
  double x_u_given_y;    // I(X;U|Y)
  double x_v_given_yu;   // I(X;V|Y,U)
};

/// m1 = |C_U|, m2 = |C_V,i|, m3 = |C_Z,i| and the two bin counts. Values can
/// exceed 2^64 in the ensemble engine, hence long double.
struct CodebookSizes {
  long double m1 = 1, m2 = 1, m3 = 1, bins_u = 1, bins_v = 1;

  long double total_symbols(std::size_t n) const { return (m1 + m1 * m2 + m1 * m3) * static_cast<long double>(n); }
};

class CodebookTooLarge : public ValidationError {
 public:
  CodebookTooLarge(const CodebookSizes& s, std::size_t n, std::uint64_t cap)
      : ValidationError(message(s, n, cap)), sizes(s) {}
  CodebookSizes sizes;

 private:
  static std::string message(const CodebookSizes& s, std::size_t n, std::uint64_t cap) {
    std::ostringstream os;
    os.precision(6);
    os << "codebooks exceed the memory cap: m1=" << static_cast<double>(s.m1) << " m2=" << static_cast<double>(s.m2)
       << " m3=" << static_cast<double>(s.m3) << " n=" << n << " total symbols="
       << static_cast<double>(s.total_symbols(n)) << " cap=" << cap;
    return os.str();
  }
};

/// ceil(2^exponent), exact when the exponent is an integer up to rounding.
/// Never below 1, so undersized bin exponents still leave one bin.
inline long double ceil_pow2(double exponent) {
  if (exponent <= 0.0) return 1.0L;
  const long double v = std::exp2l(static_cast<long double>(exponent));
  if (exponent >= 64.0) return v;
  const long double r = std::nearbyintl(v);
  if (std::fabs(static_cast<double>(v - r)) <= 1e-9 * static_cast<double>(std::max<long double>(1.0L, v))) return r;
  return std::ceil(v);
}

namespace detail {

inline constexpr std::size_t kX = 0, kY = 1, kU = 2, kV = 3, kZ = 4;

inline double snap(double v) { return std::abs(v) < 1e-12 ? 0.0 : v; }

// Conditional p(b|a) from a two-variable joint [a][b]; unreachable rows uniform.
inline std::vector<double> conditional_rows(const Distribution& ab) {
  const std::size_t na = ab.shape()[0], nb = ab.shape()[1];
  std::vector<double> out(na * nb);
  for (std::size_t a = 0; a < na; ++a) {
    double mass = 0.0;
    for (std::size_t b = 0; b < nb; ++b) mass += ab.values()[a * nb + b];
    for (std::size_t b = 0; b < nb; ++b) {
      out[a * nb + b] = mass > 0.0 ? ab.values()[a * nb + b] / mass : 1.0 / static_cast<double>(nb);
    }
  }
  return out;
}

}  // namespace detail

/// Everything the encoders need that follows from the configuration: the
/// five-variable joint, typicality targets, codeword laws, information
/// profile and codebook sizes.
class Scheme {
 public:
  explicit Scheme(const SimConfig& cfg)
      : n_(cfg.n), epsilon_(cfg.epsilon), joint_(region::inner_joint(cfg.source, cfg.aux)) {
    if (cfg.n == 0) throw ValidationError("SimConfig: blocklength must be positive");
    if (!(cfg.epsilon > 0.0) || !std::isfinite(cfg.epsilon)) throw ValidationError("SimConfig: epsilon must be > 0");
    if (!std::isfinite(cfg.bin_slack())) throw ValidationError("SimConfig: bin slack must be finite");
    if (cfg.batches == 0) throw ValidationError("SimConfig: batches must be positive");
    cfg.aux.require_compatible(cfg.source, cfg.dist);
    for (std::size_t s : joint_.shape())
      if (s > 256) throw ValidationError("SimConfig: alphabets above 256 symbols are not supported");

    using detail::kU, detail::kV, detail::kX, detail::kY, detail::kZ;
    auto marg = [&](std::initializer_list<std::size_t> keep) {
      std::vector<std::size_t> k(keep);
      return joint_.marginal(k);
    };
    p_xu_ = marg({kX, kU});
    p_xuv_ = marg({kX, kU, kV});
    p_yu_ = marg({kY, kU});
    p_yuv_ = marg({kY, kU, kV});
    p_yuvz_ = marg({kY, kU, kV, kZ});
    const Distribution p_u = marg({kU});
    p_u_.assign(p_u.values().begin(), p_u.values().end());
    v_given_u_ = detail::conditional_rows(marg({kU, kV}));
    z_given_u_ = detail::conditional_rows(marg({kU, kZ}));

    const std::size_t X[1] = {kX}, Y[1] = {kY}, U[1] = {kU}, V[1] = {kV}, Z[1] = {kZ};
    const std::size_t YV[2] = {kY, kV}, YU[2] = {kY, kU};
    info_.x_u = detail::snap(conditional_mutual_information(joint_, X, U));
    info_.x_v_given_u = detail::snap(conditional_mutual_information(joint_, X, V, U));
    info_.yv_z_given_u = detail::snap(conditional_mutual_information(joint_, YV, Z, U));
    info_.x_u_given_y = detail::snap(conditional_mutual_information(joint_, X, U, Y));
    info_.x_v_given_yu = detail::snap(conditional_mutual_information(joint_, X, V, YU));

    const double n = static_cast<double>(cfg.n);
    sizes_.m1 = ceil_pow2(n * (info_.x_u + cfg.epsilon));
    sizes_.m2 = ceil_pow2(n * (info_.x_v_given_u + cfg.epsilon));
    sizes_.m3 = ceil_pow2(n * (info_.yv_z_given_u + cfg.epsilon));
    sizes_.bins_u = ceil_pow2(n * (info_.x_u_given_y + cfg.bin_slack()));
    sizes_.bins_v = ceil_pow2(n * (info_.x_v_given_yu + cfg.bin_slack()));
  }

  std::size_t n() const { return n_; }
  double epsilon() const { return epsilon_; }
  std::size_t size_x() const { return joint_.shape()[detail::kX]; }
  std::size_t size_y() const { return joint_.shape()[detail::kY]; }
  std::size_t size_u() const { return joint_.shape()[detail::kU]; }
  std::size_t size_v() const { return joint_.shape()[detail::kV]; }
  std::size_t size_z() const { return joint_.shape()[detail::kZ]; }

  const Distribution& joint() const { return joint_; }
  const Distribution& p_xu() const { return p_xu_; }
  const Distribution& p_xuv() const { return p_xuv_; }
  const Distribution& p_yu() const { return p_yu_; }
  const Distribution& p_yuv() const { return p_yuv_; }
  const Distribution& p_yuvz() const { return p_yuvz_; }
  std::span<const double> p_u() const { return p_u_; }
  std::span<const double> v_given_u() const { return v_given_u_; }  // [u][v]
  std::span<const double> z_given_u() const { return z_given_u_; }  // [u][z]

  const InformationProfile& info() const { return info_; }
  const CodebookSizes& sizes() const { return sizes_; }

  /// Nominal inner-region rates (I(X;U,V|Y), I(X;U) + I(Y,V;Z|U)).
  double nominal_r1() const { return info_.x_u_given_y + info_.x_v_given_yu; }
  double nominal_r2() const { return info_.x_u + info_.yv_z_given_u; }

  /// Rates actually spent: log2 of the index ranges sent on each link over n.
  double effective_r1() const {
    return static_cast<double>(std::log2l(sizes_.bins_u) + std::log2l(sizes_.bins_v)) / static_cast<double>(n_);
  }
  double effective_r2() const {
    return static_cast<double>(std::log2l(sizes_.m1) + std::log2l(sizes_.m3)) / static_cast<double>(n_);
  }

 private:
  std::size_t n_;
  double epsilon_;
  Distribution joint_;
  Distribution p_xu_ = Distribution::assemble({1}, {1.0});
  Distribution p_xuv_ = p_xu_, p_yu_ = p_xu_, p_yuv_ = p_xu_, p_yuvz_ = p_xu_;
  std::vector<double> p_u_, v_given_u_, z_given_u_;
  InformationProfile info_{};
  CodebookSizes sizes_;
};

// ---------------------------------------------------------------------------
// Explicit codebooks

/// Materialized codebooks and bin maps. Public indices are 1-based.
struct CodebookSet {
  std::size_t n = 0;
  std::uint64_t m1 = 0, m2 = 0, m3 = 0, bins_u_count = 0, bins_v_count = 0;
  std::vector<std::uint8_t> cb_u;       // [i][t]
  std::vector<std::uint8_t> cb_v;       // [i][j][t]
  std::vector<std::uint8_t> cb_z;       // [i][k][t]
  std::vector<std::uint64_t> bins_u;    // [i]
  std::vector<std::uint64_t> bins_v;    // [i][j]

  std::span<const std::uint8_t> u(std::uint64_t i) const { return {cb_u.data() + (i - 1) * n, n}; }
  std::span<const std::uint8_t> v(std::uint64_t j, std::uint64_t i) const {
    return {cb_v.data() + ((i - 1) * m2 + (j - 1)) * n, n};
  }
  std::span<const std::uint8_t> z(std::uint64_t k, std::uint64_t i) const {
    return {cb_z.data() + ((i - 1) * m3 + (k - 1)) * n, n};
  }
  std::uint64_t bin_u(std::uint64_t i) const { return bins_u[i - 1]; }
  std::uint64_t bin_v(std::uint64_t j, std::uint64_t i) const { return bins_v[(i - 1) * m2 + (j - 1)]; }

  friend bool operator==(const CodebookSet&, const CodebookSet&) = default;
};

namespace detail {

inline std::size_t draw(std::span<const double> pmf, Rng& rng) {
  const double t = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    acc += pmf[i];
    if (t < acc) return i;
  }
  // Rounding left t above the total: return the last symbol with mass.
  for (std::size_t i = pmf.size(); i-- > 0;)
    if (pmf[i] > 0.0) return i;
  return 0;
}

inline std::uint64_t as_count(long double v) { return static_cast<std::uint64_t>(v); }

}  // namespace detail

/// Draws C_U i.i.d. from p(u), each C_V,i and C_Z,i symbol by symbol from
/// p(v|u) and p(z|u) given u^n(i), and uniform bins for every U and V
/// codeword. Refuses configurations above the memory cap.
inline CodebookSet generate_codebooks(const SimConfig& cfg, const Scheme& scheme, std::size_t batch = 0) {
  const CodebookSizes& s = scheme.sizes();
  if (s.total_symbols(cfg.n) > static_cast<long double>(cfg.memory_cap)) {
    throw CodebookTooLarge(s, cfg.n, cfg.memory_cap);
  }
  const std::size_t n = cfg.n, nv = scheme.size_v(), nz = scheme.size_z();
  CodebookSet cb;
  cb.n = n;
  cb.m1 = detail::as_count(s.m1);
  cb.m2 = detail::as_count(s.m2);
  cb.m3 = detail::as_count(s.m3);
  cb.bins_u_count = detail::as_count(std::min<long double>(s.bins_u, 0x1p63L));
  cb.bins_v_count = detail::as_count(std::min<long double>(s.bins_v, 0x1p63L));

  Rng rng(derive_seed(cfg.seed, {0xC0DE, batch}));
  cb.cb_u.resize(cb.m1 * n);
  for (auto& sym : cb.cb_u) sym = static_cast<std::uint8_t>(detail::draw(scheme.p_u(), rng));
  cb.cb_v.resize(cb.m1 * cb.m2 * n);
  cb.cb_z.resize(cb.m1 * cb.m3 * n);
  for (std::uint64_t i = 1; i <= cb.m1; ++i) {
    const auto u = cb.u(i);
    for (std::uint64_t j = 0; j < cb.m2; ++j)
      for (std::size_t t = 0; t < n; ++t)
        cb.cb_v[((i - 1) * cb.m2 + j) * n + t] =
            static_cast<std::uint8_t>(detail::draw(scheme.v_given_u().subspan(u[t] * nv, nv), rng));
    for (std::uint64_t k = 0; k < cb.m3; ++k)
      for (std::size_t t = 0; t < n; ++t)
        cb.cb_z[((i - 1) * cb.m3 + k) * n + t] =
            static_cast<std::uint8_t>(detail::draw(scheme.z_given_u().subspan(u[t] * nz, nz), rng));
  }
  cb.bins_u.resize(cb.m1);
  for (auto& b : cb.bins_u) b = 1 + uniform_index(rng, cb.bins_u_count);
  cb.bins_v.resize(cb.m1 * cb.m2);
  for (auto& b : cb.bins_v) b = 1 + uniform_index(rng, cb.bins_v_count);
  return cb;
}

inline CodebookSet generate_codebooks(const SimConfig& cfg, std::size_t batch = 0) {
  return generate_codebooks(cfg, Scheme(cfg), batch);
}

struct Encoder1Result {
  TrialStatus status;
  std::uint64_t b_u = 1, b_v = 1;  // bin numbers sent to Encoder 2
  std::uint64_t i = 1, j = 1;      // codeword indices (diagnostics only)
};

/// First u^n(i) typical with x^n, then first v^n(j,i) typical with
/// (x^n, u^n(i)); sends their bin numbers. On failure index 1 stands in.
inline Encoder1Result encode1(std::span<const std::uint8_t> x, const CodebookSet& cb, const Scheme& scheme) {
  if (x.size() != cb.n) throw ValidationError("encode1: source block has the wrong length");
  Encoder1Result out{TrialStatus::enc1_u_fail};
  std::uint64_t i = 0;
  for (std::uint64_t c = 1; c <= cb.m1 && !i; ++c)
    if (is_jointly_typical({x, cb.u(c)}, scheme.p_xu(), scheme.epsilon())) i = c;
  if (!i) {
    out.b_u = cb.bin_u(1);
    out.b_v = cb.bin_v(1, 1);
    return out;
  }
  out.i = i;
  out.b_u = cb.bin_u(i);
  std::uint64_t j = 0;
  for (std::uint64_t c = 1; c <= cb.m2 && !j; ++c)
    if (is_jointly_typical({x, cb.u(i), cb.v(c, i)}, scheme.p_xuv(), scheme.epsilon())) j = c;
  if (!j) {
    out.status = TrialStatus::enc1_v_fail;
    out.b_v = cb.bin_v(1, i);
    return out;
  }
  out.status = TrialStatus::ok;
  out.j = j;
  out.b_v = cb.bin_v(j, i);
  return out;
}

struct Encoder2Result {
  TrialStatus status;
  std::uint64_t i = 1, k = 1;  // indices sent to the decoder
  std::uint64_t j = 1;         // decoded V index (diagnostics only)
};

/// Bin-decodes u^n and v^n with y^n as side information (exactly one typical
/// candidate required at each step), then sends the first z^n(k,i) typical
/// with (y^n, u^n, v^n).
inline Encoder2Result encode2(std::span<const std::uint8_t> y, std::uint64_t b_u, std::uint64_t b_v,
                              const CodebookSet& cb, const Scheme& scheme) {
  if (y.size() != cb.n) throw ValidationError("encode2: side information block has the wrong length");
  Encoder2Result out{TrialStatus::enc2_u_ambiguous};
  std::uint64_t i = 0, found = 0;
  for (std::uint64_t c = 1; c <= cb.m1; ++c) {
    if (cb.bin_u(c) == b_u && is_jointly_typical({y, cb.u(c)}, scheme.p_yu(), scheme.epsilon())) {
      ++found;
      i = c;
    }
  }
  if (found != 1) return out;
  out.i = i;
  std::uint64_t j = 0;
  found = 0;
  for (std::uint64_t c = 1; c <= cb.m2; ++c) {
    if (cb.bin_v(c, i) == b_v && is_jointly_typical({y, cb.u(i), cb.v(c, i)}, scheme.p_yuv(), scheme.epsilon())) {
      ++found;
      j = c;
    }
  }
  if (found != 1) {
    out.status = TrialStatus::enc2_v_ambiguous;
    return out;
  }
  out.j = j;
  for (std::uint64_t k = 1; k <= cb.m3; ++k) {
    if (is_jointly_typical({y, cb.u(i), cb.v(j, i), cb.z(k, i)}, scheme.p_yuvz(), scheme.epsilon())) {
      out.status = TrialStatus::ok;
      out.k = k;
      return out;
    }
  }
  out.status = TrialStatus::enc2_z_fail;
  return out;
}

/// z^n(k, i).
inline Sequence decode(std::uint64_t i, std::uint64_t k, const CodebookSet& cb) {
  if (i < 1 || i > cb.m1 || k < 1 || k > cb.m3) throw ValidationError("decode: index out of range");
  const auto z = cb.z(k, i);
  return Sequence(z.begin(), z.end());
}

// ---------------------------------------------------------------------------
// Ensemble engine

namespace detail {

// One typicality search: codewords are i.i.d. with symbol law q(w|c) given a
// fixed context sequence c^n, and must be typical with c^n for the target
// p(c,w). Everything factorizes over context classes, so the probability of
// typicality and the conditional law of a typical codeword follow from a
// dynamic program over the multinomial counts of each class.
class TypicalitySearch {
 public:
  TypicalitySearch(std::size_t contexts, std::size_t symbols, std::span<const double> target,
                   std::vector<double> law, std::size_t n, double eps)
      : contexts_(contexts), symbols_(symbols), n_(n), law_(std::move(law)) {
    ranges_.reserve(contexts * symbols);
    for (double p : target) ranges_.push_back(typical_range(n, p, eps));
    split_.resize(contexts * symbols);
    for (std::size_t c = 0; c < contexts; ++c) {
      double tail = 0.0;
      for (std::size_t w = symbols; w-- > 0;) {
        tail += law_[c * symbols + w];
        split_[c * symbols + w] = tail > 0.0 ? std::min(1.0, law_[c * symbols + w] / tail) : 0.0;
      }
    }
    log_factorial_.resize(n + 1, 0.0L);
    for (std::size_t k = 1; k <= n; ++k) log_factorial_[k] = log_factorial_[k - 1] + std::log(static_cast<long double>(k));
  }

  /// P(an i.i.d. codeword is typical with the context sequence).
  long double probability(std::span<const std::uint32_t> context) {
    long double p = 1.0L;
    const auto counts = class_counts(context);
    for (std::size_t c = 0; c < contexts_ && p > 0.0L; ++c) p *= table(c, counts[c])[counts[c]];
    return p;
  }

  /// A codeword drawn from its i.i.d. law conditioned on typicality. Requires
  /// probability(context) > 0.
  Sequence sample_typical(std::span<const std::uint32_t> context, Rng& rng) {
    const auto counts = class_counts(context);
    std::vector<std::vector<std::uint8_t>> symbols_of(contexts_);
    std::vector<long double> weight;
    for (std::size_t c = 0; c < contexts_; ++c) {
      const auto& tab = table(c, counts[c]);
      const std::size_t stride = counts[c] + 1;
      std::size_t left = counts[c];
      for (std::size_t w = 0; w < symbols_; ++w) {
        const CountRange range = ranges_[c * symbols_ + w];
        weight.assign(left + 1, 0.0L);
        long double total = 0.0L;
        for (std::int64_t k = range.lo; k <= std::min<std::int64_t>(range.hi, static_cast<std::int64_t>(left)); ++k) {
          const auto ku = static_cast<std::size_t>(k);
          weight[ku] = pmf(ku, left, split_[c * symbols_ + w]) * tab[(w + 1) * stride + left - ku];
          total += weight[ku];
        }
        long double t = static_cast<long double>(uniform01(rng)) * total;
        std::size_t pick = 0;
        for (std::size_t k = 0; k <= left; ++k) {
          if (weight[k] <= 0.0L) continue;
          pick = k;
          if (t < weight[k]) break;
          t -= weight[k];
        }
        symbols_of[c].insert(symbols_of[c].end(), pick, static_cast<std::uint8_t>(w));
        left -= pick;
      }
      // Random placement of the class's symbols over its positions.
      auto& s = symbols_of[c];
      for (std::size_t k = s.size(); k > 1; --k) std::swap(s[k - 1], s[uniform_index(rng, k)]);
    }
    Sequence out(context.size());
    std::vector<std::size_t> next(contexts_, 0);
    for (std::size_t t = 0; t < context.size(); ++t) out[t] = symbols_of[context[t]][next[context[t]]++];
    return out;
  }

  Sequence sample_iid(std::span<const std::uint32_t> context, Rng& rng) const {
    Sequence out(context.size());
    for (std::size_t t = 0; t < context.size(); ++t) {
      out[t] = static_cast<std::uint8_t>(draw(std::span(law_).subspan(context[t] * symbols_, symbols_), rng));
    }
    return out;
  }

  bool typical(std::span<const std::uint32_t> context, std::span<const std::uint8_t> word) const {
    std::vector<std::int64_t> counts(contexts_ * symbols_, 0);
    for (std::size_t t = 0; t < context.size(); ++t) ++counts[context[t] * symbols_ + word[t]];
    for (std::size_t cell = 0; cell < counts.size(); ++cell)
      if (!ranges_[cell].contains(counts[cell])) return false;
    return true;
  }

 private:
  std::vector<std::size_t> class_counts(std::span<const std::uint32_t> context) const {
    if (context.size() != n_) throw ValidationError("TypicalitySearch: context has the wrong length");
    std::vector<std::size_t> counts(contexts_, 0);
    for (std::uint32_t c : context) ++counts[c];
    return counts;
  }

  long double pmf(std::size_t k, std::size_t r, double split) const {
    if (split <= 0.0) return k == 0 ? 1.0L : 0.0L;
    if (split >= 1.0) return k == r ? 1.0L : 0.0L;
    const long double lg = log_factorial_[r] - log_factorial_[k] - log_factorial_[r - k] +
                           static_cast<long double>(k) * std::log(static_cast<long double>(split)) +
                           static_cast<long double>(r - k) * std::log1p(-static_cast<long double>(split));
    return std::exp(lg);
  }

  // tab[w * (m + 1) + r]: probability that symbols w.. spread r remaining
  // draws of a class of size m inside their typical ranges.
  const std::vector<long double>& table(std::size_t c, std::size_t m) {
    const std::uint64_t key = static_cast<std::uint64_t>(c) * (n_ + 1) + m;
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const std::size_t stride = m + 1;
    std::vector<long double> tab((symbols_ + 1) * stride, 0.0L);
    tab[symbols_ * stride + 0] = 1.0L;
    for (std::size_t w = symbols_; w-- > 0;) {
      const CountRange range = ranges_[c * symbols_ + w];
      for (std::size_t r = 0; r <= m; ++r) {
        long double acc = 0.0L;
        for (std::int64_t k = range.lo; k <= std::min<std::int64_t>(range.hi, static_cast<std::int64_t>(r)); ++k) {
          const auto ku = static_cast<std::size_t>(k);
          const long double rest = tab[(w + 1) * stride + r - ku];
          if (rest > 0.0L) acc += pmf(ku, r, split_[c * symbols_ + w]) * rest;
        }
        tab[w * stride + r] = acc;
      }
    }
    return cache_.emplace(key, std::move(tab)).first->second;
  }

  std::size_t contexts_, symbols_, n_;
  std::vector<double> law_;
  std::vector<CountRange> ranges_;
  std::vector<double> split_;  // q(w|c) / sum_{w' >= w} q(w'|c)
  std::vector<long double> log_factorial_;
  std::unordered_map<std::uint64_t, std::vector<long double>> cache_;
};

// P(Binomial(count, p) = 0) and P(= 1) for huge counts and tiny p.
inline std::array<long double, 2> binomial_head(long double count, long double p) {
  if (count <= 0.0L || p <= 0.0L) return {1.0L, 0.0L};
  if (p >= 1.0L) return {0.0L, count == 1.0L ? 1.0L : 0.0L};
  const long double log_q = std::log1p(-p);
  const long double zero = std::exp(count * log_q);
  const long double one = count * p * std::exp((count - 1.0L) * log_q);
  return {zero, one};
}

// min(Binomial(count, p), 2).
inline int binomial_category(long double count, long double p, Rng& rng) {
  const auto head = binomial_head(count, p);
  const long double t = static_cast<long double>(uniform01(rng));
  if (t < head[0]) return 0;
  if (t < head[0] + head[1]) return 1;
  return 2;
}

struct FirstMatch {
  bool found;
  long double index;  // 1-based
};

// Index of the first success among `count` independent trials of
// probability q.
inline FirstMatch first_match(long double count, long double q, Rng& rng) {
  if (q <= 0.0L || count < 1.0L) return {false, 0.0L};
  if (q >= 1.0L) return {true, 1.0L};
  const long double log_miss = std::log1p(-q);
  const long double p_found = -std::expm1(count * log_miss);
  const long double t = static_cast<long double>(uniform01(rng));
  if (t >= p_found) return {false, 0.0L};
  const long double index = std::floor(std::log1p(-t) / log_miss) + 1.0L;
  return {true, std::min(index, count)};
}

}  // namespace detail

struct Messages {
  std::uint64_t b_u, b_v, i, k;
};

struct TrialOutcome {
  TrialStatus status;
  std::optional<double> distortion;  // present iff status == ok
  std::optional<Messages> messages;  // explicit engine only
};

namespace detail {

inline double block_distortion(const DistortionFn& dist, std::span<const std::uint8_t> x,
                               std::span<const std::uint8_t> y, std::span<const std::uint8_t> z) {
  double total = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) total += dist(x[t], y[t], z[t]);
  return total / static_cast<double>(x.size());
}

inline std::pair<Sequence, Sequence> draw_source(const JointSource& source, std::size_t n, Rng& rng) {
  Sequence x(n), y(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t cell = draw(source.pmf(), rng);
    x[t] = static_cast<std::uint8_t>(cell / source.size_y());
    y[t] = static_cast<std::uint8_t>(cell % source.size_y());
  }
  return {std::move(x), std::move(y)};
}

// Ensemble trials. Codewords ahead of the selected one in a first-match
// search are conditioned on failing it; when few of them share the selected
// bin they are drawn one by one, otherwise their chance of being typical
// with the side information is bounded by q_side / (1 - q_search), which
// can only overstate ambiguity.
class EnsembleRunner {
 public:
  static constexpr long double kExplicitPredecessors = 4096.0L;

  EnsembleRunner(const SimConfig& cfg, const Scheme& scheme)
      : cfg_(cfg),
        s_(scheme),
        nu_(scheme.size_u()),
        nv_(scheme.size_v()),
        u_at_x_(scheme.size_x(), nu_, scheme.p_xu().values(), repeat(scheme.p_u(), scheme.size_x()), cfg.n,
                cfg.epsilon),
        v_at_xu_(scheme.size_x() * nu_, nv_, scheme.p_xuv().values(), repeat(scheme.v_given_u(), scheme.size_x()),
                 cfg.n, cfg.epsilon),
        u_at_y_(scheme.size_y(), nu_, scheme.p_yu().values(), repeat(scheme.p_u(), scheme.size_y()), cfg.n,
                cfg.epsilon),
        v_at_yu_(scheme.size_y() * nu_, nv_, scheme.p_yuv().values(), repeat(scheme.v_given_u(), scheme.size_y()),
                 cfg.n, cfg.epsilon),
        z_at_yuv_(scheme.size_y() * nu_ * nv_, scheme.size_z(), scheme.p_yuvz().values(), z_law(scheme), cfg.n,
                  cfg.epsilon) {}

  TrialOutcome run(Rng& rng) {
    const CodebookSizes& sz = s_.sizes();
    auto [x, y] = draw_source(cfg_.source, cfg_.n, rng);
    const std::vector<std::uint32_t> ctx_x(x.begin(), x.end()), ctx_y(y.begin(), y.end());

    // Encoder 1, U search.
    const long double q_u = u_at_x_.probability(ctx_x);
    const FirstMatch first_u = first_match(sz.m1, q_u, rng);
    if (!first_u.found) return {TrialStatus::enc1_u_fail, std::nullopt, std::nullopt};
    const Sequence u = u_at_x_.sample_typical(ctx_x, rng);

    // Encoder 1, V search in C_V,i.
    const auto ctx_xu = pair_context(x, u, nu_);
    const long double q_v = v_at_xu_.probability(ctx_xu);
    const FirstMatch first_v = first_match(sz.m2, q_v, rng);
    if (!first_v.found) return {TrialStatus::enc1_v_fail, std::nullopt, std::nullopt};
    const Sequence v = v_at_xu_.sample_typical(ctx_xu, rng);

    // Encoder 2, bin decoding of U.
    Sequence u_hat;
    bool u_correct = false;
    {
      const bool own = u_at_y_.typical(ctx_y, u);
      const long double q_side = u_at_y_.probability(ctx_y);
      auto rivals = rival_candidates(first_u.index, sz.m1, sz.bins_u, q_u, q_side, rng, [&](Rng& r) {
        Sequence w;
        do {
          w = u_at_x_.sample_iid(ctx_x, r);
        } while (u_at_x_.typical(ctx_x, w));
        return w;
      }, [&](std::span<const std::uint8_t> w) { return u_at_y_.typical(ctx_y, w); });
      const int total = std::min(2, rivals.count + (own ? 1 : 0));
      if (total != 1) return {TrialStatus::enc2_u_ambiguous, std::nullopt, std::nullopt};
      if (own) {
        u_hat = u;
        u_correct = true;
      } else {
        u_hat = rivals.word ? *rivals.word : u_at_y_.sample_typical(ctx_y, rng);
      }
    }

    // Encoder 2, bin decoding of V in C_V,i for the decoded i.
    const auto ctx_yu = pair_context(y, u_hat, nu_);
    Sequence v_hat;
    {
      const long double q_side = v_at_yu_.probability(ctx_yu);
      if (u_correct) {
        const bool own = v_at_yu_.typical(ctx_yu, v);
        auto rivals = rival_candidates(first_v.index, sz.m2, sz.bins_v, q_v, q_side, rng, [&](Rng& r) {
          Sequence w;
          do {
            w = v_at_xu_.sample_iid(ctx_xu, r);
          } while (v_at_xu_.typical(ctx_xu, w));
          return w;
        }, [&](std::span<const std::uint8_t> w) { return v_at_yu_.typical(ctx_yu, w); });
        const int total = std::min(2, rivals.count + (own ? 1 : 0));
        if (total != 1) return {TrialStatus::enc2_v_ambiguous, std::nullopt, std::nullopt};
        v_hat = own ? v : (rivals.word ? *rivals.word : v_at_yu_.sample_typical(ctx_yu, rng));
      } else {
        // A wrongly decoded U points at a codebook Encoder 1 never searched.
        if (binomial_category(sz.m2, q_side / sz.bins_v, rng) != 1) {
          return {TrialStatus::enc2_v_ambiguous, std::nullopt, std::nullopt};
        }
        v_hat = v_at_yu_.sample_typical(ctx_yu, rng);
      }
    }

    // Encoder 2, Z search in C_Z,i.
    std::vector<std::uint32_t> ctx_yuv(cfg_.n);
    for (std::size_t t = 0; t < cfg_.n; ++t) ctx_yuv[t] = static_cast<std::uint32_t>(ctx_yu[t] * nv_ + v_hat[t]);
    const long double q_z = z_at_yuv_.probability(ctx_yuv);
    if (!first_match(sz.m3, q_z, rng).found) return {TrialStatus::enc2_z_fail, std::nullopt, std::nullopt};
    const Sequence z = z_at_yuv_.sample_typical(ctx_yuv, rng);
    return {TrialStatus::ok, block_distortion(cfg_.dist, x, y, z), std::nullopt};
  }

 private:
  struct Rivals {
    int count;                    // min(number of other typical codewords in the bin, 2)
    std::optional<Sequence> word;  // the rival, when it was drawn explicitly and unique
  };

  // Other codewords sharing the selected codeword's bin that are typical with
  // the side information. Codewords after the selected index are unconstrained;
  // those before it failed the encoder's search.
  template <class DrawFailed, class IsTypical>
  Rivals rival_candidates(long double index, long double count, long double bins, long double q_search,
                          long double q_side, Rng& rng, DrawFailed draw_failed, IsTypical typical_side) {
    const int after = binomial_category(count - index, q_side / bins, rng);
    const long double before = index - 1.0L;
    const long double expected = before / bins;
    int before_count = 0;
    std::optional<Sequence> word;
    if (expected <= kExplicitPredecessors) {
      std::uint64_t shared;
      if (before < 0x1p62L) {
        std::binomial_distribution<std::uint64_t> bin(static_cast<std::uint64_t>(before),
                                                      static_cast<double>(1.0L / bins));
        shared = bin(rng);
      } else {
        std::poisson_distribution<std::uint64_t> pois(static_cast<double>(expected));
        shared = pois(rng);
      }
      for (std::uint64_t k = 0; k < shared && before_count < 2; ++k) {
        Sequence w = draw_failed(rng);
        if (typical_side(w)) {
          ++before_count;
          word = std::move(w);
        }
      }
    } else {
      const long double r = std::min(1.0L, q_side / (1.0L - q_search));
      before_count = binomial_category(before, r / bins, rng);
    }
    const int total = std::min(2, after + before_count);
    if (total != 1 || before_count != 1) word.reset();
    return {total, std::move(word)};
  }

  static std::vector<std::uint32_t> pair_context(const Sequence& a, const Sequence& b, std::size_t nb) {
    std::vector<std::uint32_t> out(a.size());
    for (std::size_t t = 0; t < a.size(); ++t) out[t] = static_cast<std::uint32_t>(a[t] * nb + b[t]);
    return out;
  }

  static std::vector<double> repeat(std::span<const double> rows, std::size_t times) {
    std::vector<double> out;
    for (std::size_t k = 0; k < times; ++k) out.insert(out.end(), rows.begin(), rows.end());
    return out;
  }

  static std::vector<double> z_law(const Scheme& s) {
    std::vector<double> out;
    for (std::size_t y = 0; y < s.size_y(); ++y)
      for (std::size_t u = 0; u < s.size_u(); ++u)
        for (std::size_t v = 0; v < s.size_v(); ++v)
          out.insert(out.end(), s.z_given_u().begin() + u * s.size_z(), s.z_given_u().begin() + (u + 1) * s.size_z());
    return out;
  }

  const SimConfig& cfg_;
  const Scheme& s_;
  std::size_t nu_, nv_;
  TypicalitySearch u_at_x_, v_at_xu_, u_at_y_, v_at_yu_, z_at_yuv_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Trials

struct SimSummary {
  Engine engine = Engine::explicit_codebooks;
  std::size_t n = 0;
  std::size_t trials = 0;
  std::array<std::size_t, kStatusCount> status_counts{};
  std::size_t exceed_count = 0;       // ok trials above d_target plus every failed trial
  double d_target = 0.0;
  std::optional<double> mean_distortion;  // over ok trials
  double distortion_stderr = 0.0;
  double histogram_max = 0.0;
  std::vector<std::size_t> histogram;  // ok-trial block distortions on [0, histogram_max]
  InformationProfile info{};
  CodebookSizes sizes;
  double nominal_r1 = 0.0, nominal_r2 = 0.0;
  double effective_r1 = 0.0, effective_r2 = 0.0;
  std::vector<TrialOutcome> outcomes;

  std::size_t count(TrialStatus s) const { return status_counts[static_cast<std::size_t>(s)]; }
  std::size_t failures() const { return trials - count(TrialStatus::ok); }
  double failure_rate() const { return trials ? static_cast<double>(failures()) / static_cast<double>(trials) : 0.0; }
  double exceed_fraction() const {
    return trials ? static_cast<double>(exceed_count) / static_cast<double>(trials) : 0.0;
  }
};

inline constexpr std::size_t kHistogramBins = 20;

/// Runs cfg.trials blocks. Explicit codebooks are redrawn per batch; the
/// ensemble engine draws a fresh codebook every trial. A failed trial has no
/// distortion and counts toward the exceedance fraction.
inline SimSummary run_trials(const SimConfig& cfg) {
  const Scheme scheme(cfg);
  SimSummary out;
  out.engine = cfg.engine;
  out.n = cfg.n;
  out.trials = cfg.trials;
  out.d_target = cfg.d_target;
  out.info = scheme.info();
  out.sizes = scheme.sizes();
  out.nominal_r1 = scheme.nominal_r1();
  out.nominal_r2 = scheme.nominal_r2();
  out.effective_r1 = scheme.effective_r1();
  out.effective_r2 = scheme.effective_r2();
  out.histogram_max = *std::max_element(cfg.dist.table().begin(), cfg.dist.table().end());
  out.histogram.assign(kHistogramBins, 0);
  if (cfg.trials == 0) return out;

  if (cfg.engine == Engine::explicit_codebooks) {
    for (std::size_t b = 0; b < cfg.batches; ++b) {
      const std::size_t begin = b * cfg.trials / cfg.batches, end = (b + 1) * cfg.trials / cfg.batches;
      if (begin == end) continue;
      const CodebookSet cb = generate_codebooks(cfg, scheme, b);
      for (std::size_t t = begin; t < end; ++t) {
        Rng rng(derive_seed(cfg.seed, {0x7121, t}));
        auto [x, y] = detail::draw_source(cfg.source, cfg.n, rng);
        TrialOutcome outcome{};
        const Encoder1Result e1 = encode1(x, cb, scheme);
        Messages msg{e1.b_u, e1.b_v, 1, 1};
        outcome.status = e1.status;
        if (e1.status == TrialStatus::ok) {
          const Encoder2Result e2 = encode2(y, e1.b_u, e1.b_v, cb, scheme);
          outcome.status = e2.status;
          msg.i = e2.i;
          msg.k = e2.k;
          if (e2.status == TrialStatus::ok) {
            const Sequence z = decode(e2.i, e2.k, cb);
            outcome.distortion = detail::block_distortion(cfg.dist, x, y, z);
          }
        }
        outcome.messages = msg;
        out.outcomes.push_back(outcome);
      }
    }
  } else {
    detail::EnsembleRunner runner(cfg, scheme);
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      Rng rng(derive_seed(cfg.seed, {0x7121, t}));
      out.outcomes.push_back(runner.run(rng));
    }
  }

  double sum = 0.0, sum_sq = 0.0;
  std::size_t ok = 0;
  for (const auto& o : out.outcomes) {
    ++out.status_counts[static_cast<std::size_t>(o.status)];
    if (!o.distortion) {
      ++out.exceed_count;
      continue;
    }
    const double d = *o.distortion;
    ++ok;
    sum += d;
    sum_sq += d * d;
    if (d > cfg.d_target) ++out.exceed_count;
    std::size_t bin = 0;
    if (out.histogram_max > 0.0) {
      bin = std::min(kHistogramBins - 1, static_cast<std::size_t>(d / out.histogram_max * kHistogramBins));
    }
    ++out.histogram[bin];
  }
  if (ok) {
    const double mean = sum / static_cast<double>(ok);
    out.mean_distortion = mean;
    if (ok > 1) {
      const double var = std::max(0.0, (sum_sq - sum * mean) / static_cast<double>(ok - 1));
      out.distortion_stderr = std::sqrt(var / static_cast<double>(ok));
    }
  }
  return out;
}

}  // namespace cascade::sim
