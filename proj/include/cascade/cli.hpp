#pragma once

// Command-line front end: gaussian-sweep, region, simulate, verify.
//
// Option values come from three layers, later ones winning: the preset, the
// --config JSON file, then explicit flags. Scalar keys of the config file act
// as flags of the same name; nested arrays and objects (px_y, d, aux, ...)
// are data. Every run writes manifest.json with the resolved option values
// and data, and passing that manifest back through --config reproduces the
// run's CSV and JSON files byte for byte.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cascade/gaussian.hpp"
#include "cascade/io.hpp"
#include "cascade/model.hpp"
#include "cascade/region.hpp"
#include "cascade/simulator.hpp"
#include "cascade/verify.hpp"

namespace cascade::cli {

using nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

enum Exit : int { kOk = 0, kUsage = 2, kValidation = 3, kVerification = 4 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Comma-separated values; "lo:hi:k" expands to k evenly spaced points.
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      throw UsageError("bad grid value '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) throw UsageError("bad grid value '" + s + "'");
    return v;
  };
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    const auto c1 = item.find(':');
    if (c1 == std::string::npos) {
      out.push_back(number(item));
      continue;
    }
    const auto c2 = item.find(':', c1 + 1);
    if (c2 == std::string::npos) throw UsageError("range '" + item + "' must be lo:hi:count");
    const double lo = number(item.substr(0, c1)), hi = number(item.substr(c1 + 1, c2 - c1 - 1));
    const double k = number(item.substr(c2 + 1));
    if (k < 1 || k != std::floor(k)) throw UsageError("range '" + item + "' needs a positive integer count");
    const auto count = static_cast<std::size_t>(k);
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
    }
  }
  return out;
}

inline std::string join_grid(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + io::fmt(v[i]);
  return s;
}

namespace detail {

struct Preset {
  std::vector<std::string> tokens;
  json data = json::object();
};

inline json doubly_symmetric_source(double p) {
  return {{"px_y", {{(1 - p) / 2, p / 2}, {p / 2, (1 - p) / 2}}}};
}

// Hamming distortion against x.
inline json hamming_to_x() { return {{"d", {{{0, 1}, {0, 1}}, {{1, 0}, {1, 0}}}}}; }

inline json nested_rows(const std::vector<double>& flat, std::size_t row_len) {
  json out = json::array();
  for (std::size_t r = 0; r * row_len < flat.size(); ++r)
    out.push_back(std::vector<double>(flat.begin() + r * row_len, flat.begin() + (r + 1) * row_len));
  return out;
}

inline json aux_json(std::size_t nu, std::size_t nv, json uv, json z) {
  return {{"size_u", nu}, {"size_v", nv}, {"kernel_uv_given_x", std::move(uv)}, {"kernel_z_given_yuv", std::move(z)}};
}

inline std::map<std::string, Preset> presets(const std::string& sub) {
  if (sub == "gaussian-sweep") {
    return {{"example", {{"--mode=rates", "--px=1", "--py=1", "--rho=0", "--r1=1", "--r2=1"}}},
            {"threshold", {{"--mode=rates", "--px=4", "--py=1", "--rho=0", "--r1=0:2:21", "--r2=1"}}},
            {"lemma1",
             {{"--mode=sumrate", "--px=0.5,1", "--py=1,2", "--rho=-0.5,0,0.5", "--d-frac=0.02:1:50"}}}};
  }
  if (sub == "region") {
    return {{"korner-marton", {{"--slices=0"}}}, {"markov", {{}}}};
  }
  if (sub == "simulate") {
    json lossless = {{"px_y", {{0.5, 0.0}, {0.0, 0.5}}}};
    lossless.update(hamming_to_x());
    // U trivial, V = X, Z = V.
    lossless["aux"] = aux_json(1, 2, {{{1, 0}}, {{0, 1}}}, {{{{1, 0}, {0, 1}}}, {{{1, 0}, {0, 1}}}});
    json noisy = doubly_symmetric_source(0.25);
    noisy.update(hamming_to_x());
    // U trivial, V = X through a binary symmetric channel of crossover 0.1, Z = V.
    noisy["aux"] = aux_json(1, 2, {{{0.9, 0.1}}, {{0.1, 0.9}}}, {{{{1, 0}, {0, 1}}}, {{{1, 0}, {0, 1}}}});
    json small = doubly_symmetric_source(0.25);
    small.update(hamming_to_x());
    // U = X through crossover 0.25, V trivial, Z = U; small enough for explicit codebooks.
    small["aux"] = aux_json(2, 1, {{{0.75}, {0.25}}, {{0.25}, {0.75}}}, {{{{1, 0}}, {{0, 1}}}, {{{1, 0}}, {{0, 1}}}});
    return {{"lossless-xy",
             {{"--n=200", "--epsilon=0.15", "--trials=1000", "--d-target=0.05", "--engine=ensemble"}, lossless}},
            {"n-sweep",
             {{"--n-list=50,100,200,400", "--epsilon=0.15", "--trials=1000", "--d-target=0.15", "--engine=ensemble"},
              noisy}},
            {"small-explicit",
             {{"--n=8", "--epsilon=0.34", "--trials=2000", "--batches=200", "--d-target=0.3", "--engine=explicit"},
              small}}};
  }
  return {};
}

// Value of --name in raw arguments, either "--name v" or "--name=v".
inline std::optional<std::string> scan(const std::vector<std::string>& args, const std::string& name) {
  std::optional<std::string> found;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == name && i + 1 < args.size()) found = args[i + 1];
    if (args[i].rfind(name + "=", 0) == 0) found = args[i].substr(name.size() + 1);
  }
  return found;
}

inline bool is_data(const json& v) {
  if (v.is_object()) return true;
  if (v.is_array()) {
    for (const auto& e : v)
      if (!e.is_number()) return true;
  }
  return false;
}

inline std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number()) return io::fmt(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_array()) {
    std::vector<double> xs;
    for (const auto& e : v) xs.push_back(e.get<double>());
    return join_grid(xs);
  }
  throw ValidationError("config value is not a scalar");
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json load_json(const std::filesystem::path& p) {
  try {
    return json::parse(slurp(p));
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

class Writer {
 public:
  explicit Writer(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    std::filesystem::create_directories(dir_);
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + (dir_ / name).string() + "'");
    out << content;
    outputs_.push_back(name);
  }

  void write(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  const std::vector<std::string>& outputs() const { return outputs_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> outputs_;
};

struct Common {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::string preset;
  std::string config;
};

inline void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Base seed for every random choice")->capture_default_str();
  sub->add_option("--out-dir", c.out_dir, "Directory for output files")->capture_default_str();
  sub->add_option("--preset", c.preset, "Named parameter set");
  sub->add_option("--config", c.config, "JSON file of option values and data (flags override it)");
}

// Resolved option values of a subcommand, keyed by long name.
inline json resolved_options(const CLI::App* sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_min() == 0) {
      out[name] = opt->count() > 0;
      continue;
    }
    std::string value = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
    if (!value.empty()) out[name] = value;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

struct GaussianArgs {
  std::string mode = "rates";
  std::string px, py, rho, r1, r2, d, d_frac;
};

inline std::string gaussian_sweep(const GaussianArgs& a) {
  const auto px = parse_grid(a.px), py = parse_grid(a.py), rho = parse_grid(a.rho);
  for (double v : px)
    if (!(v > 0)) throw UsageError("px values must be positive");
  for (double v : py)
    if (!(v > 0)) throw UsageError("py values must be positive");
  for (double v : rho)
    if (v < -1 || v > 1) throw UsageError("rho values must lie in [-1, 1]");
  std::string csv;
  using io::fmt;
  if (a.mode == "rates") {
    const auto r1 = parse_grid(a.r1), r2 = parse_grid(a.r2);
    for (double v : r1)
      if (v < 0) throw UsageError("rates must be >= 0");
    for (double v : r2)
      if (v < 0) throw UsageError("rates must be >= 0");
    csv = "px,py,rho,r1,r2,d_inner,d_outer,strategy\n";
    for (double x : px)
      for (double y : py)
        for (double p : rho) {
          const GaussianPair pair(x, y, p);
          for (double s1 : r1)
            for (double s2 : r2) {
              const auto choice = gaussian::strategy_threshold(pair, s1).choice;
              csv += fmt(x) + "," + fmt(y) + "," + fmt(p) + "," + fmt(s1) + "," + fmt(s2) + "," +
                     fmt(gaussian::inner_bound_distortion(pair, s1, s2)) + "," +
                     fmt(gaussian::outer_bound_distortion(pair, s1, s2)) + "," + gaussian::to_string(choice) + "\n";
            }
        }
    return csv;
  }
  if (a.mode != "sumrate") throw UsageError("mode must be rates or sumrate");
  const auto ds = parse_grid(a.d), fracs = parse_grid(a.d_frac);
  if (!ds.empty() && !fracs.empty()) throw UsageError("give --d or --d-frac, not both");
  csv = "px,py,rho,d,r_upper,r_lower,gap\n";
  for (double x : px)
    for (double y : py) {
      if (x > y) continue;  // the sum-rate bounds assume Px <= Py
      for (double p : rho) {
        const GaussianPair pair(x, y, p);
        std::vector<double> levels = ds;
        for (double f : fracs) levels.push_back(f * pair.sum_variance());
        for (double d : levels) {
          if (!(d > 0) || d > pair.sum_variance()) {
            throw UsageError("distortion " + fmt(d) + " outside (0, Var(X+Y)] for px=" + fmt(x) + " py=" + fmt(y) +
                             " rho=" + fmt(p));
          }
          const double up = gaussian::sumrate_upper(pair, d).rate, lo = gaussian::sumrate_lower(pair, d).rate;
          csv += fmt(x) + "," + fmt(y) + "," + fmt(p) + "," + fmt(d) + "," + fmt(up) + "," + fmt(lo) + "," +
                 fmt(up - lo) + "\n";
        }
      }
    }
  return csv;
}

struct RegionArgs {
  std::string input;
  std::string kind = "both";
  std::size_t size_u = 0, size_v = 0;  // 0: |X| + 2
  std::size_t restarts = 6, iterations = 3000, automatic_slices = 5, threads = 0;
  std::string slices;
  double crossover = 0.11;
};

struct SimulateArgs {
  std::size_t n = 0;
  double epsilon = 0.1;
  std::optional<double> bin_epsilon;  // unset: 2 epsilon
  std::size_t trials = 100, batches = 1;
  double d_target = 0.0;
  std::string engine = "explicit";
  std::uint64_t memory_cap = std::uint64_t{1} << 28;
  std::string n_list;
  bool per_trial = false;
};

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rate-distortion toolkit for the two-hop cascade source coding network"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  detail::Common common;
  GaussianArgs g;
  RegionArgs rg;
  SimulateArgs sm;
  std::string suite;

  auto* gs = app.add_subcommand("gaussian-sweep", "Gaussian inner/outer distortions or sum-rate bounds on a grid");
  detail::add_common(gs, common);
  gs->add_option("--mode", g.mode, "rates or sumrate")->check(CLI::IsMember({"rates", "sumrate"}))
      ->capture_default_str();
  gs->add_option("--px", g.px, "Grid of Var(X)");
  gs->add_option("--py", g.py, "Grid of Var(Y)");
  gs->add_option("--rho", g.rho, "Grid of correlation coefficients");
  gs->add_option("--r1", g.r1, "Grid of R1 (rates mode)");
  gs->add_option("--r2", g.r2, "Grid of R2 (rates mode)");
  gs->add_option("--d", g.d, "Grid of distortions (sumrate mode)");
  gs->add_option("--d-frac", g.d_frac, "Grid of distortions as fractions of Var(X+Y) (sumrate mode)");

  auto* rs = app.add_subcommand("region", "Search inner and outer rate-distortion frontiers");
  detail::add_common(rs, common);
  rs->add_option("--input", rg.input, "JSON file with px_y and d");
  rs->add_option("--kind", rg.kind, "inner, outer or both")->check(CLI::IsMember({"inner", "outer", "both"}))
      ->capture_default_str();
  rs->add_option("--size-u", rg.size_u, "|U| (0: |X|+2)")->capture_default_str();
  rs->add_option("--size-v", rg.size_v, "|V| (0: |X|+2)")->capture_default_str();
  rs->add_option("--restarts", rg.restarts)->capture_default_str();
  rs->add_option("--iterations", rg.iterations)->capture_default_str();
  rs->add_option("--slices", rg.slices, "Distortion slices (default: evenly spaced)");
  rs->add_option("--automatic-slices", rg.automatic_slices)->capture_default_str();
  rs->add_option("--threads", rg.threads, "Worker threads (0: all cores)")->capture_default_str();
  rs->add_option("--crossover", rg.crossover, "Crossover probability for the korner-marton preset")
      ->capture_default_str();

  auto* ss = app.add_subcommand("simulate", "Monte Carlo run of the random-coding scheme");
  detail::add_common(ss, common);
  ss->add_option("--n", sm.n, "Blocklength")->capture_default_str();
  ss->add_option("--epsilon", sm.epsilon, "Typicality and codebook slack")->capture_default_str();
  ss->add_option("--bin-epsilon", sm.bin_epsilon, "Bin exponent slack (default 2 epsilon; may be negative)");
  ss->add_option("--trials", sm.trials)->capture_default_str();
  ss->add_option("--batches", sm.batches, "Codebook redraws (explicit engine)")->capture_default_str();
  ss->add_option("--d-target", sm.d_target, "Distortion level for the exceedance fraction")->capture_default_str();
  ss->add_option("--engine", sm.engine, "explicit or ensemble")->check(CLI::IsMember({"explicit", "ensemble"}))
      ->capture_default_str();
  ss->add_option("--memory-cap", sm.memory_cap, "Codeword symbol cap (explicit engine)")->capture_default_str();
  ss->add_option("--n-list", sm.n_list, "Blocklengths for a sweep");
  ss->add_flag("--per-trial", sm.per_trial, "Also write trials.csv");

  auto* vs = app.add_subcommand("verify", "Run an invariant suite");
  detail::add_common(vs, common);
  vs->add_option("suite", suite, "lemma1, threshold, continuity, sandwich, markov or function")->required();

  json data = json::object();
  try {
    // Layer preset, config file and flags into one token list.
    std::vector<std::string> tokens;
    if (!args.empty()) {
      const std::string sub = args.front();
      std::vector<std::string> rest(args.begin() + 1, args.end());
      json config = json::object();
      if (auto path = detail::scan(rest, "--config")) {
        config = detail::load_json(*path);
        if (config.contains("subcommand") && config.contains("config")) config = config["config"];
        if (!config.is_object()) throw ValidationError("config file must hold a JSON object");
      }
      std::string preset_name = detail::scan(rest, "--preset").value_or("");
      if (preset_name.empty() && config.contains("preset")) preset_name = detail::scalar_text(config["preset"]);
      tokens.push_back(sub);
      if (!preset_name.empty()) {
        const auto table = detail::presets(sub);
        auto it = table.find(preset_name);
        if (it == table.end()) throw UsageError("unknown preset '" + preset_name + "' for " + sub);
        tokens.insert(tokens.end(), it->second.tokens.begin(), it->second.tokens.end());
        data.update(it->second.data);
      }
      for (const auto& [key, value] : config.items()) {
        if (detail::is_data(value)) {
          data[key] = value;
        } else if (value.is_boolean()) {
          if (value.get<bool>()) tokens.push_back("--" + key);
        } else if (!value.is_null()) {
          tokens.push_back("--" + key + "=" + detail::scalar_text(value));
        }
      }
      tokens.insert(tokens.end(), rest.begin(), rest.end());
    }
    std::vector<std::string> reversed(tokens.rbegin(), tokens.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    app.exit(e, out, err);
    return kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kValidation;
  }

  detail::Writer writer(common.out_dir);
  auto manifest = [&](const CLI::App* sub, const json& extra_data) {
    json config = detail::resolved_options(sub);
    for (const auto& [k, v] : extra_data.items()) config[k] = v;
    writer.write("manifest.json", json{{"subcommand", sub->get_name()},
                                       {"version", kVersion},
                                       {"seed", common.seed},
                                       {"config", config},
                                       {"outputs", writer.outputs()}});
  };

  try {
    if (gs->parsed()) {
      writer.write("gaussian_sweep.csv", gaussian_sweep(g));
      manifest(gs, json::object());
      out << "wrote " << (writer.dir() / "gaussian_sweep.csv").string() << "\n";
      return kOk;
    }

    if (rs->parsed()) {
      if (common.preset == "markov") {
        // Y - X - Z with a ternary X and Z = X: the decoder reproduces X.
        const JointSource source(3, 2, {0.3 * 0.8, 0.3 * 0.2, 0.5 * 0.5, 0.5 * 0.5, 0.2 * 0.1, 0.2 * 0.9});
        const std::vector<double> zx{1, 0, 0, 0, 1, 0, 0, 0, 1};
        const auto closed = region::markov_rates(source, region::MarkovChain::y_x_z,
                                                 region::kernel_from_x(source, zx, 3), 3);
        const auto witness = region::markov_inner_witness(source, zx, 3);
        const DistortionFn zero(3, 2, 3, std::vector<double>(18, 0.0));
        const auto t = region::evaluate_inner_point(source, zero, witness);
        writer.write("markov.json", json{{"source", io::to_json(source)},
                                         {"z_given_x", detail::nested_rows(zx, 3)},
                                         {"closed_form", {{"r1", io::round12(closed.r1)}, {"r2", io::round12(closed.r2)}}},
                                         {"witness_rates", io::to_json(t)},
                                         {"witness", io::to_json(witness, true)}});
        manifest(rs, json::object());
        out << "closed form (R1, R2) = (" << io::fmt(closed.r1) << ", " << io::fmt(closed.r2) << "), witness ("
            << io::fmt(t.r1) << ", " << io::fmt(t.r2) << ")\n";
        return kOk;
      }
      json problem = data;
      if (!rg.input.empty()) problem.update(detail::load_json(rg.input));
      if (common.preset == "korner-marton") {
        if (!(rg.crossover >= 0 && rg.crossover <= 1)) throw UsageError("crossover must lie in [0, 1]");
        problem = detail::doubly_symmetric_source(rg.crossover);
        problem["d"] = {{{0, 1}, {1, 0}}, {{1, 0}, {0, 1}}};  // Hamming against x XOR y
      }
      const JointSource source = io::source_from_json(problem);
      const DistortionFn dist = io::distortion_from_json(problem, source);
      region::SearchBudget budget;
      budget.restarts = rg.restarts;
      budget.iterations = rg.iterations;
      budget.seed = common.seed;
      budget.automatic_slices = rg.automatic_slices;
      budget.threads = rg.threads;
      budget.distortion_slices = parse_grid(rg.slices);
      auto inner_cards = region::default_inner_cardinalities(source, dist);
      auto outer_cards = region::default_outer_cardinalities(source, dist);
      if (rg.size_u) inner_cards.size_u = outer_cards.size_u = rg.size_u;
      if (rg.size_v) inner_cards.size_v = rg.size_v;

      std::string csv = "r1,r2,d,kind,seed\n";
      json frontiers = json::object();
      for (const char* kind : {"inner", "outer"}) {
        if (rg.kind != "both" && rg.kind != kind) continue;
        const auto f = std::string(kind) == "inner" ? region::optimize_inner_frontier(source, dist, inner_cards, budget)
                                                   : region::optimize_outer_frontier(source, dist, outer_cards, budget);
        csv += io::frontier_csv(f).substr(std::string("r1,r2,d,kind,seed\n").size());
        frontiers[kind] = io::to_json(f);
        for (double d : f.slices) {
          const auto* best = f.best_at(d, 0.5);
          out << kind << " D<=" << io::fmt(d) << ": ";
          if (best) {
            out << "min R1 " << io::fmt(*f.min_r1_at(d)) << ", min R2 " << io::fmt(*f.min_r2_at(d))
                << ", balanced point (" << io::fmt(best->triple.r1) << ", " << io::fmt(best->triple.r2) << ")\n";
          } else {
            out << "no feasible point found\n";
          }
        }
      }
      writer.write("frontier.csv", csv);
      writer.write("frontier.json", frontiers);
      json used = json::object();
      used.update(io::to_json(source));
      used.update(io::to_json(dist));
      manifest(rs, common.preset == "korner-marton" ? json::object() : used);
      return kOk;
    }

    if (ss->parsed()) {
      json cfg_json = data;
      cfg_json["n"] = sm.n;
      cfg_json["epsilon"] = sm.epsilon;
      if (sm.bin_epsilon) cfg_json["bin_epsilon"] = *sm.bin_epsilon;
      cfg_json["trials"] = sm.trials;
      cfg_json["batches"] = sm.batches;
      cfg_json["seed"] = common.seed;
      cfg_json["d_target"] = sm.d_target;
      cfg_json["engine"] = sm.engine;
      cfg_json["memory_cap"] = sm.memory_cap;
      std::vector<std::size_t> ns;
      for (double v : parse_grid(sm.n_list)) {
        if (v < 1 || v != std::floor(v)) throw UsageError("n-list needs positive integers");
        ns.push_back(static_cast<std::size_t>(v));
      }
      if (ns.empty()) ns.push_back(sm.n);
      json summaries = json::array();
      std::string table = "n,trials,failure_rate,exceed_fraction,mean_distortion,effective_r1,effective_r2\n";
      std::string trials_csv;
      for (std::size_t n : ns) {
        cfg_json["n"] = n;
        const sim::SimConfig cfg = io::sim_config_from_json(cfg_json);
        const sim::SimSummary s = sim::run_trials(cfg);
        summaries.push_back(io::to_json(s));
        table += std::to_string(n) + "," + std::to_string(s.trials) + "," + io::fmt(s.failure_rate()) + "," +
                 io::fmt(s.exceed_fraction()) + "," + (s.mean_distortion ? io::fmt(*s.mean_distortion) : "") + "," +
                 io::fmt(s.effective_r1) + "," + io::fmt(s.effective_r2) + "\n";
        if (sm.per_trial && ns.size() == 1) trials_csv = io::trials_csv(s);
        out << "n=" << n << " trials=" << s.trials << " failure_rate=" << io::fmt(s.failure_rate())
            << " exceed_fraction=" << io::fmt(s.exceed_fraction()) << "\n";
      }
      writer.write("summary.json", ns.size() == 1 ? summaries.front() : summaries);
      if (ns.size() > 1) writer.write("sweep.csv", table);
      if (!trials_csv.empty()) writer.write("trials.csv", trials_csv);
      json used = json::object();
      for (const char* key : {"px_y", "d", "aux", "source", "distortion"})
        if (data.contains(key)) used[key] = data[key];
      manifest(ss, used);
      return kOk;
    }

    if (vs->parsed()) {
      const auto& names = verify::suite_names();
      if (std::find(names.begin(), names.end(), suite) == names.end()) {
        err << "usage error: unknown suite '" << suite << "'\n";
        return kUsage;
      }
      const verify::SuiteReport r = verify::run_suite(suite, common.seed);
      writer.write("verify_" + suite + ".json", json{{"suite", r.suite},
                                                     {"passed", r.passed},
                                                     {"checks", r.checks},
                                                     {"failures", r.failures},
                                                     {"worst", io::round12(r.worst)},
                                                     {"tolerance", r.tolerance},
                                                     {"details", r.details}});
      manifest(vs, json::object());
      out << (r.passed ? "PASS " : "FAIL ") << suite << ": " << r.summary << " (" << r.checks << " checks, "
          << r.failures << " failures)\n";
      return r.passed ? kOk : kVerification;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kValidation;
  }
  return kUsage;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace cascade::cli
