#pragma once

// JSON encoding of sources, distortion tables, auxiliary systems, frontiers
// and simulation summaries. Malformed input raises ValidationError naming the
// offending field.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <json.hpp>

#include "cascade/model.hpp"
#include "cascade/region.hpp"
#include "cascade/simulator.hpp"

namespace cascade::io {

using nlohmann::json;

/// printf %.12g, the precision used for every numeric output.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// v rounded to 12 significant digits, so JSON output matches the CSV.
inline double round12(double v) { return std::isfinite(v) ? std::strtod(fmt(v).c_str(), nullptr) : v; }

namespace detail {

[[noreturn]] inline void bad(const std::string& field, const std::string& why) {
  throw ValidationError("field '" + field + "': " + why);
}

inline const json& member(const json& j, const std::string& field) {
  if (!j.is_object()) bad(field, "parent is not an object");
  auto it = j.find(field);
  if (it == j.end()) bad(field, "missing");
  return *it;
}

inline double number(const json& j, const std::string& field) {
  if (!j.is_number()) bad(field, "expected a number");
  return j.get<double>();
}

inline std::size_t count(const json& j, const std::string& field) {
  if (!j.is_number_integer() || j.get<long long>() < 0) bad(field, "expected a non-negative integer");
  return j.get<std::size_t>();
}

// Nested numeric array with a fixed shape, flattened row-major. Returns the
// shape found when `expected` has zeros in it.
inline std::vector<double> tensor(const json& j, const std::string& field, std::vector<std::size_t>& shape) {
  std::vector<double> out;
  auto walk = [&](auto&& self, const json& node, std::size_t depth) -> void {
    if (depth == shape.size()) {
      out.push_back(number(node, field));
      return;
    }
    if (!node.is_array()) bad(field, "expected a nested array of depth " + std::to_string(shape.size()));
    if (shape[depth] == 0) shape[depth] = node.size();
    if (node.size() != shape[depth] || node.empty()) {
      bad(field, "dimension " + std::to_string(depth) + " has length " + std::to_string(node.size()) +
                     ", expected " + std::to_string(shape[depth]));
    }
    for (const auto& child : node) self(self, child, depth + 1);
  };
  walk(walk, j, 0);
  return out;
}

template <class F>
auto rethrow_as(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    bad(field, e.what());
  }
}

inline json nested(std::span<const double> flat, const std::vector<std::size_t>& shape, bool rounded = false,
                   std::size_t depth = 0, std::size_t offset = 0) {
  json arr = json::array();
  std::size_t stride = 1;
  for (std::size_t k = depth + 1; k < shape.size(); ++k) stride *= shape[k];
  for (std::size_t i = 0; i < shape[depth]; ++i) {
    if (depth + 1 == shape.size()) {
      arr.push_back(rounded ? round12(flat[offset + i]) : flat[offset + i]);
    } else {
      arr.push_back(nested(flat, shape, rounded, depth + 1, offset + i * stride));
    }
  }
  return arr;
}

}  // namespace detail

/// {"px_y": [[p(0,0), p(0,1), ...], ...]}
inline JointSource source_from_json(const json& j) {
  std::vector<std::size_t> shape{0, 0};
  auto pmf = detail::tensor(detail::member(j, "px_y"), "px_y", shape);
  return detail::rethrow_as("px_y", [&] { return JointSource(shape[0], shape[1], std::move(pmf)); });
}

/// {"d": [[[d(x,y,z) ...]]]} indexed [x][y][z].
inline DistortionFn distortion_from_json(const json& j, const JointSource& source) {
  std::vector<std::size_t> shape{source.size_x(), source.size_y(), 0};
  auto table = detail::tensor(detail::member(j, "d"), "d", shape);
  return detail::rethrow_as("d", [&] { return DistortionFn(shape[0], shape[1], shape[2], std::move(table)); });
}

inline json to_json(const JointSource& s) {
  return {{"px_y", detail::nested(s.pmf(), {s.size_x(), s.size_y()})}};
}

inline json to_json(const DistortionFn& d) {
  return {{"d", detail::nested(d.table(), {d.size_x(), d.size_y(), d.size_z()})}};
}

// Witness kernels found by a search are outputs and get rounded; kernels
// that belong to a configuration are written exactly.
inline json to_json(const region::AuxiliarySystem& a, bool rounded = false) {
  return {{"size_u", a.size_u()},
          {"size_v", a.size_v()},
          {"kernel_uv_given_x", detail::nested(a.kernel_uv_given_x(), {a.size_x(), a.size_u(), a.size_v()}, rounded)},
          {"kernel_z_given_yuv",
           detail::nested(a.kernel_z_given_yuv(), {a.size_y(), a.size_u(), a.size_v(), a.size_z()}, rounded)}};
}

inline json to_json(const region::OuterSystem& o, bool rounded = false) {
  return {{"size_u", o.size_u()},
          {"kernel_u_given_x", detail::nested(o.kernel_u_given_x(), {o.size_x(), o.size_u()}, rounded)},
          {"kernel_z_given_yu", detail::nested(o.kernel_z_given_yu(), {o.size_y(), o.size_u(), o.size_z()}, rounded)}};
}

inline region::AuxiliarySystem aux_from_json(const json& j, const JointSource& source, const DistortionFn& dist) {
  const std::size_t nu = detail::count(detail::member(j, "size_u"), "aux.size_u");
  const std::size_t nv = detail::count(detail::member(j, "size_v"), "aux.size_v");
  std::vector<std::size_t> s1{source.size_x(), nu, nv};
  auto uv = detail::tensor(detail::member(j, "kernel_uv_given_x"), "aux.kernel_uv_given_x", s1);
  std::vector<std::size_t> s2{source.size_y(), nu, nv, dist.size_z()};
  auto z = detail::tensor(detail::member(j, "kernel_z_given_yuv"), "aux.kernel_z_given_yuv", s2);
  return detail::rethrow_as("aux", [&] {
    return region::AuxiliarySystem(source.size_x(), source.size_y(), nu, nv, dist.size_z(), std::move(uv),
                                   std::move(z));
  });
}

inline json to_json(const RateDistortionTriple& t) {
  return {{"r1", round12(t.r1)}, {"r2", round12(t.r2)}, {"d", round12(t.d)}};
}

inline json rounded_list(std::span<const double> v) {
  json arr = json::array();
  for (double x : v) arr.push_back(round12(x));
  return arr;
}

inline json to_json(const region::RegionFrontier& f) {
  json points = json::array();
  for (const auto& p : f.points) {
    json item = to_json(p.triple);
    item["seed"] = p.seed;
    std::visit([&](const auto& w) { item["witness"] = to_json(w, true); }, p.witness);
    points.push_back(std::move(item));
  }
  return {{"kind", region::to_string(f.kind)},
          {"heuristic_minimum", f.heuristic_minimum},
          {"slices", rounded_list(f.slices)},
          {"points", std::move(points)}};
}

/// Frontier rows for CSV: r1,r2,d,kind,seed.
inline std::string frontier_csv(const region::RegionFrontier& f) {
  std::string out = "r1,r2,d,kind,seed\n";
  for (const auto& p : f.points) {
    out += fmt(p.triple.r1) + "," + fmt(p.triple.r2) + "," + fmt(p.triple.d) + "," + region::to_string(f.kind) +
           "," + std::to_string(p.seed) + "\n";
  }
  return out;
}

/// Reads a SimConfig. Fields: source (px_y), distortion (d), aux, n, epsilon,
/// bin_epsilon, trials, batches, seed, d_target, engine, memory_cap. The
/// source and distortion may also sit at the top level.
inline sim::SimConfig sim_config_from_json(const json& j) {
  const json& src_node = j.contains("source") ? j["source"] : j;
  const json& dist_node = j.contains("distortion") ? j["distortion"] : j;
  JointSource source = source_from_json(src_node);
  DistortionFn dist = distortion_from_json(dist_node, source);
  region::AuxiliarySystem aux = aux_from_json(detail::member(j, "aux"), source, dist);
  sim::SimConfig cfg{.source = source, .dist = dist, .aux = aux};
  cfg.n = detail::count(detail::member(j, "n"), "n");
  if (j.contains("epsilon")) cfg.epsilon = detail::number(j["epsilon"], "epsilon");
  if (j.contains("bin_epsilon") && !j["bin_epsilon"].is_null()) {
    cfg.bin_epsilon = detail::number(j["bin_epsilon"], "bin_epsilon");
  }
  if (j.contains("trials")) cfg.trials = detail::count(j["trials"], "trials");
  if (j.contains("batches")) cfg.batches = detail::count(j["batches"], "batches");
  if (j.contains("seed")) cfg.seed = detail::count(j["seed"], "seed");
  if (j.contains("d_target")) cfg.d_target = detail::number(j["d_target"], "d_target");
  if (j.contains("engine")) {
    if (!j["engine"].is_string()) detail::bad("engine", "expected a string");
    cfg.engine = detail::rethrow_as("engine", [&] { return sim::parse_engine(j["engine"].get<std::string>()); });
  }
  if (j.contains("memory_cap")) cfg.memory_cap = detail::count(j["memory_cap"], "memory_cap");
  return cfg;
}

inline json to_json(const sim::SimConfig& c) {
  json j = {{"source", to_json(c.source)},
            {"distortion", to_json(c.dist)},
            {"aux", to_json(c.aux)},
            {"n", c.n},
            {"epsilon", c.epsilon},
            {"bin_epsilon", c.bin_slack()},
            {"trials", c.trials},
            {"batches", c.batches},
            {"seed", c.seed},
            {"d_target", c.d_target},
            {"engine", sim::to_string(c.engine)},
            {"memory_cap", c.memory_cap}};
  return j;
}

inline json to_json(const sim::SimSummary& s) {
  json counts = json::object();
  for (std::size_t k = 0; k < sim::kStatusCount; ++k) {
    counts[sim::to_string(static_cast<sim::TrialStatus>(k))] = s.status_counts[k];
  }
  // Counts beyond 2^53 are not exact doubles; they go out as 12-digit strings.
  auto ld = [](long double v) -> json {
    if (v < 0x1p53L) return static_cast<std::uint64_t>(v);
    return fmt(static_cast<double>(v));
  };
  return {{"engine", sim::to_string(s.engine)},
          {"n", s.n},
          {"trials", s.trials},
          {"status_counts", counts},
          {"failure_rate", round12(s.failure_rate())},
          {"d_target", round12(s.d_target)},
          {"exceed_fraction", round12(s.exceed_fraction())},
          {"mean_distortion", s.mean_distortion ? json(round12(*s.mean_distortion)) : json(nullptr)},
          {"distortion_stderr", round12(s.distortion_stderr)},
          {"histogram", {{"max", round12(s.histogram_max)}, {"counts", s.histogram}}},
          {"information",
           {{"I(X;U)", round12(s.info.x_u)},
            {"I(X;V|U)", round12(s.info.x_v_given_u)},
            {"I(Y,V;Z|U)", round12(s.info.yv_z_given_u)},
            {"I(X;U|Y)", round12(s.info.x_u_given_y)},
            {"I(X;V|Y,U)", round12(s.info.x_v_given_yu)}}},
          {"codebook",
           {{"m1", ld(s.sizes.m1)},
            {"m2", ld(s.sizes.m2)},
            {"m3", ld(s.sizes.m3)},
            {"bins_u", ld(s.sizes.bins_u)},
            {"bins_v", ld(s.sizes.bins_v)}}},
          {"rates",
           {{"nominal_r1", round12(s.nominal_r1)},
            {"nominal_r2", round12(s.nominal_r2)},
            {"effective_r1", round12(s.effective_r1)},
            {"effective_r2", round12(s.effective_r2)}}}};
}

/// Per-trial rows: trial,status,distortion (empty when the trial failed).
inline std::string trials_csv(const sim::SimSummary& s) {
  std::string out = "trial,status,distortion\n";
  for (std::size_t t = 0; t < s.outcomes.size(); ++t) {
    const auto& o = s.outcomes[t];
    out += std::to_string(t) + "," + sim::to_string(o.status) + "," + (o.distortion ? fmt(*o.distortion) : "") + "\n";
  }
  return out;
}

}  // namespace cascade::io
