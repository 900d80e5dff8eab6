#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cascade/cli.hpp"
#include "cascade/io.hpp"
#include "oracle.hpp"

using namespace cascade;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("cascade_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

std::string validation_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Json, SourceAndDistortionRoundTrip) {
  const JointSource s(2, 3, {0.1, 0.2, 0.05, 0.15, 0.3, 0.2});
  const DistortionFn d(2, 3, 2, {0, 1, 0.5, 0.5, 1, 0, 2, 0, 0, 2, 1, 1});
  const auto s2 = io::source_from_json(io::to_json(s));
  const auto d2 = io::distortion_from_json(io::to_json(d), s2);
  EXPECT_TRUE(std::ranges::equal(s.pmf(), s2.pmf()));
  EXPECT_EQ(s2.size_x(), 2u);
  EXPECT_EQ(s2.size_y(), 3u);
  EXPECT_TRUE(std::ranges::equal(d.table(), d2.table()));
  EXPECT_EQ(d2.size_z(), 2u);
}

TEST(Json, SimConfigRoundTripReproducesCodebooks) {
  const JointSource s(2, 2, {0.375, 0.125, 0.125, 0.375});
  const DistortionFn d(2, 2, 2, {0, 1, 0, 1, 1, 0, 1, 0});
  const region::AuxiliarySystem aux(2, 2, 2, 1, 2, {0.75, 0.25, 0.25, 0.75}, {1, 0, 0, 1, 1, 0, 0, 1});
  const sim::SimConfig cfg{.n = 8,
                           .epsilon = 0.34,
                           .bin_epsilon = 0.3,
                           .source = s,
                           .dist = d,
                           .aux = aux,
                           .trials = 20,
                           .batches = 2,
                           .seed = 99,
                           .d_target = 0.25,
                           .engine = sim::Engine::explicit_codebooks};
  const auto back = io::sim_config_from_json(io::to_json(cfg));
  EXPECT_EQ(back.n, cfg.n);
  EXPECT_EQ(back.epsilon, cfg.epsilon);
  EXPECT_EQ(back.bin_slack(), cfg.bin_slack());
  EXPECT_EQ(back.seed, cfg.seed);
  EXPECT_EQ(back.trials, cfg.trials);
  EXPECT_EQ(back.batches, cfg.batches);
  EXPECT_EQ(back.engine, cfg.engine);
  EXPECT_TRUE(std::ranges::equal(back.aux.kernel_uv_given_x(), aux.kernel_uv_given_x()));
  EXPECT_EQ(sim::generate_codebooks(back, 1), sim::generate_codebooks(cfg, 1));
}

TEST(Json, MalformedFieldsAreNamed) {
  EXPECT_NE(validation_message([] { io::source_from_json(json::object()); }).find("px_y"), std::string::npos);
  EXPECT_NE(validation_message([] { io::source_from_json(json{{"px_y", {{0.5, 0.5}, {0.5}}}}); }).find("px_y"),
            std::string::npos);
  EXPECT_NE(validation_message([] { io::source_from_json(json{{"px_y", {{0.5, 0.6}, {0.1, 0.1}}}}); }).find("px_y"),
            std::string::npos);
  EXPECT_NE(validation_message([] { io::source_from_json(json{{"px_y", {{0.5, "a"}, {0.0, 0.5}}}}); }).find("px_y"),
            std::string::npos);
  const JointSource s(2, 2, {0.25, 0.25, 0.25, 0.25});
  EXPECT_NE(validation_message([&] { io::distortion_from_json(json{{"d", {{{0, 1}, {1, 0}}}}}, s); }).find("'d'"),
            std::string::npos);
  EXPECT_NE(validation_message([&] {
              io::distortion_from_json(json{{"d", {{{0, 1}, {1, 0}}, {{0, -1}, {1, 0}}}}}, s);
            }).find("'d'"),
            std::string::npos);
  json cfg = {{"px_y", {{0.5, 0.0}, {0.0, 0.5}}},
              {"d", {{{0, 1}, {0, 1}}, {{1, 0}, {1, 0}}}},
              {"aux",
               {{"size_u", 1},
                {"size_v", 2},
                {"kernel_uv_given_x", {{{1, 0}}, {{0.5, 0.6}}}},
                {"kernel_z_given_yuv", {{{{1, 0}, {0, 1}}}, {{{1, 0}, {0, 1}}}}}}},
              {"n", 10}};
  EXPECT_NE(validation_message([&] { io::sim_config_from_json(cfg); }).find("aux"), std::string::npos);
  cfg["aux"]["kernel_uv_given_x"] = {{{1, 0}}, {{0, 1}}};
  EXPECT_NO_THROW(io::sim_config_from_json(cfg));
  cfg["n"] = -3;
  EXPECT_NE(validation_message([&] { io::sim_config_from_json(cfg); }).find("'n'"), std::string::npos);
}

TEST(Json, OutputsUseTwelveDigits) {
  EXPECT_EQ(io::fmt(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(io::fmt(0.6875), "0.6875");
  EXPECT_EQ(io::round12(1.0 / 3.0), 0.333333333333);
}

TEST(Grid, ParsesListsAndRanges) {
  EXPECT_EQ(cli::parse_grid("1,2.5,3"), (std::vector<double>{1, 2.5, 3}));
  const auto r = cli::parse_grid("0:2:21");
  ASSERT_EQ(r.size(), 21u);
  EXPECT_EQ(r.front(), 0.0);
  EXPECT_EQ(r.back(), 2.0);
  EXPECT_DOUBLE_EQ(r[10], 1.0);
  EXPECT_TRUE(cli::parse_grid("").empty());
  EXPECT_THROW(cli::parse_grid("1,x"), cli::UsageError);
  EXPECT_THROW(cli::parse_grid("0:1"), cli::UsageError);
}

TEST(GaussianSweep, ExampleRow) {
  cli::GaussianArgs a;
  a.px = a.py = "1";
  a.rho = "0";
  a.r1 = a.r2 = "1";
  const auto rows = lines(cli::gaussian_sweep(a));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "px,py,rho,r1,r2,d_inner,d_outer,strategy");
  EXPECT_EQ(rows[1], "1,1,0,1,1,0.6875,0.5,recompress");
}

TEST(GaussianSweep, EmptyGridGivesHeaderOnly) {
  cli::GaussianArgs a;
  a.px = "1";
  a.py = "1";
  a.rho = "0";
  a.r1 = "";
  a.r2 = "1";
  EXPECT_EQ(cli::gaussian_sweep(a), "px,py,rho,r1,r2,d_inner,d_outer,strategy\n");
  a.mode = "sumrate";
  EXPECT_EQ(cli::gaussian_sweep(a), "px,py,rho,d,r_upper,r_lower,gap\n");
}

TEST(GaussianSweep, StrategyFlipsAtThreshold) {
  TempDir dir;
  const auto r = run_cli({"gaussian-sweep", "--preset", "threshold", "--out-dir", dir.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(read(dir.path() / "gaussian_sweep.csv"));
  ASSERT_EQ(rows.size(), 22u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = split(rows[i]);
    const double r1 = std::stod(cells[3]);
    EXPECT_EQ(cells[7], r1 < 1.0 ? "forward" : "recompress") << rows[i];
  }
}

TEST(GaussianSweep, SumRateGapWithinOneBit) {
  TempDir dir;
  const auto r = run_cli({"gaussian-sweep", "--preset", "lemma1", "--out-dir", dir.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(read(dir.path() / "gaussian_sweep.csv"));
  ASSERT_GT(rows.size(), 100u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double gap = std::stod(split(rows[i])[6]);
    EXPECT_GE(gap, -1e-9);
    EXPECT_LE(gap, 1.0);
  }
}

TEST(ExitCodes, UsageValidationAndVerification) {
  TempDir dir;
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"no-such-command"}).code, 2);
  EXPECT_EQ(run_cli({"gaussian-sweep", "--px=abc", "--py=1", "--rho=0", "--r1=1", "--r2=1", "--out-dir", dir.str()}).code,
            2);
  EXPECT_EQ(run_cli({"gaussian-sweep", "--preset", "nope", "--out-dir", dir.str()}).code, 2);
  EXPECT_EQ(run_cli({"verify", "nope", "--out-dir", dir.str()}).code, 2);
  // Explicit codebooks for the lossless preset would need ~1e69 codewords.
  const auto big = run_cli({"simulate", "--preset", "lossless-xy", "--engine", "explicit", "--out-dir", dir.str()});
  EXPECT_EQ(big.code, 3);
  EXPECT_NE(big.err.find("m2="), std::string::npos);
  const fs::path bad = dir.path() / "bad.json";
  std::ofstream(bad) << R"({"px_y": [[0.5, 0.5], [0.5, 0.5]], "d": [[[0,1],[1,0]],[[1,0],[0,1]]]})";
  EXPECT_EQ(run_cli({"region", "--input", bad.string(), "--out-dir", dir.str()}).code, 3);
  EXPECT_EQ(run_cli({"--version"}).code, 0);
}

TEST(Verify, MarkovSuitePasses) {
  TempDir dir;
  const auto r = run_cli({"verify", "markov", "--out-dir", dir.str()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const json report = json::parse(read(dir.path() / "verify_markov.json"));
  EXPECT_TRUE(report["passed"].get<bool>());
  EXPECT_EQ(report["checks"].get<int>(), 20);
  EXPECT_LE(report["worst"].get<double>(), 1e-10);
}

TEST(Verify, ContinuityAndSumRateGapSuitesPass) {
  TempDir dir;
  EXPECT_EQ(run_cli({"verify", "continuity", "--out-dir", dir.str()}).code, 0);
  EXPECT_EQ(run_cli({"verify", "lemma1", "--out-dir", dir.str()}).code, 0);
  const json report = json::parse(read(dir.path() / "verify_lemma1.json"));
  EXPECT_LE(report["details"]["max_gap"].get<double>(), 1.0);
}

TEST(Region, MarkovPresetMatchesClosedForm) {
  TempDir dir;
  const auto r = run_cli({"region", "--preset", "markov", "--out-dir", dir.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = json::parse(read(dir.path() / "markov.json"));
  // Z = X: (R1, R2) = (H(X|Y), H(X)).
  const double px[3] = {0.3, 0.5, 0.2};
  const double py_x[3][2] = {{0.8, 0.2}, {0.5, 0.5}, {0.1, 0.9}};
  oracle::Joint j;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 2; ++y) j[{x, y}] = px[x] * py_x[x][y];
  const double hx = -(0.3 * std::log2(0.3) + 0.5 * std::log2(0.5) + 0.2 * std::log2(0.2));
  const double hx_given_y = hx - oracle::cmi(j, {0}, {1});
  EXPECT_NEAR(m["closed_form"]["r1"].get<double>(), hx_given_y, 1e-10);
  EXPECT_NEAR(m["closed_form"]["r2"].get<double>(), hx, 1e-10);
  EXPECT_NEAR(m["witness_rates"]["r1"].get<double>(), hx_given_y, 1e-10);
  EXPECT_NEAR(m["witness_rates"]["r2"].get<double>(), hx, 1e-10);
}

TEST(Region, SameSeedSameFiles) {
  TempDir a, b;
  const fs::path input = a.path() / "in.json";
  std::ofstream(input) << R"({"px_y": [[0.4, 0.1], [0.1, 0.4]], "d": [[[0,1],[0,1]],[[1,0],[1,0]]]})";
  for (const auto* dir : {&a, &b}) {
    const auto r = run_cli({"region", "--input", input.string(), "--restarts", "1", "--iterations", "300",
                        "--automatic-slices", "2", "--seed", "5", "--out-dir", dir->str()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(read(a.path() / "frontier.csv"), read(b.path() / "frontier.csv"));
  EXPECT_EQ(read(a.path() / "frontier.json"), read(b.path() / "frontier.json"));
  const auto header = lines(read(a.path() / "frontier.csv")).front();
  EXPECT_EQ(header, "r1,r2,d,kind,seed");
}

TEST(Simulate, ManifestReproducesOutputs) {
  TempDir first, second;
  const auto r = run_cli({"simulate", "--preset", "small-explicit", "--trials", "300", "--batches", "30", "--seed", "4",
                      "--per-trial", "--out-dir", first.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json manifest = json::parse(read(first.path() / "manifest.json"));
  EXPECT_EQ(manifest["subcommand"], "simulate");
  EXPECT_EQ(manifest["seed"], 4);
  EXPECT_EQ(manifest["config"]["trials"], "300");
  const fs::path copy = second.path() / "from_manifest.json";
  fs::copy_file(first.path() / "manifest.json", copy);
  const auto again = run_cli({"simulate", "--config", copy.string(), "--out-dir", second.str()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(read(first.path() / "summary.json"), read(second.path() / "summary.json"));
  EXPECT_EQ(read(first.path() / "trials.csv"), read(second.path() / "trials.csv"));
}

TEST(Simulate, FlagsOverrideConfigFile) {
  TempDir dir;
  const fs::path cfg = dir.path() / "cfg.json";
  std::ofstream(cfg) << R"({"preset": "small-explicit", "trials": 50, "seed": 3})";
  const auto r = run_cli({"simulate", "--config", cfg.string(), "--trials", "0", "--out-dir", dir.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json summary = json::parse(read(dir.path() / "summary.json"));
  EXPECT_EQ(summary["trials"], 0);
  for (const auto& [status, count] : summary["status_counts"].items()) EXPECT_EQ(count, 0) << status;
  const json manifest = json::parse(read(dir.path() / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 3);
}

TEST(Simulate, SweepWritesTable) {
  TempDir dir;
  const auto r = run_cli({"simulate", "--preset", "n-sweep", "--n-list", "100,400", "--trials", "200", "--out-dir",
                      dir.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(read(dir.path() / "sweep.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "n,trials,failure_rate,exceed_fraction,mean_distortion,effective_r1,effective_r2");
  EXPECT_LE(std::stod(split(rows[2])[2]), std::stod(split(rows[1])[2]));
}
