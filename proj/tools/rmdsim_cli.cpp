#include <cstdint>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rmdsim/analysis.hpp"
#include "rmdsim/exact.hpp"
#include "rmdsim/run.hpp"
#include "rmdsim/sequence.hpp"
#include "rmdsim/trotter.hpp"

using namespace rmdsim;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::string engine;
  std::vector<uint64_t> seeds;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON run configuration")->required();
  cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
  cmd->add_option("--engine", opts.engine, "engine override: exact, gmps or peps");
  cmd->add_option("--seeds", opts.seeds, "seed list override");
  cmd->add_option("--threads", opts.threads,
                  "worker threads (default: RMDSIM_THREADS or 1)");
}

RunConfig configure(const CommonOptions& opts) {
  RunConfig config = load_config(opts.config_path);
  if (!opts.engine.empty()) {
    if (opts.engine == "exact")
      config.engine.kind = EngineKind::Exact;
    else if (opts.engine == "gmps")
      config.engine.kind = EngineKind::Gmps;
    else if (opts.engine == "peps")
      config.engine.kind = EngineKind::Peps;
    else
      throw CLI::ValidationError("--engine must be exact, gmps or peps");
  }
  if (!opts.seeds.empty()) config.seeds = opts.seeds;
  config.validate();
  return config;
}

nlohmann::json fit_to_json(const FitResult& fit) {
  nlohmann::json j;
  for (const auto& [name, value] : fit.params) j["params"][name] = value;
  for (const auto& [name, value] : fit.stderrs) j["stderr"][name] = value;
  j["window_ns"] = {fit.window.t_lo, fit.window.t_hi};
  j["method"] = fit.method;
  j["residual_norm"] = fit.residual_norm;
  if (!fit.note.empty()) j["note"] = fit.note;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prethermalization under random multipolar driving: sequence generation, "
               "time evolution, and heating-rate analysis on the 2D hard-core lattice"};
  app.require_subcommand(1);

  // --- sequence ---------------------------------------------------------
  auto* sequence_cmd = app.add_subcommand("sequence", "emit one RMD polarity sequence");
  int seq_order = 1;
  int seq_blocks = 16;
  uint64_t seq_seed = 1;
  std::string seq_out;
  sequence_cmd->add_option("--n", seq_order, "multipolar order")->check(CLI::NonNegativeNumber);
  sequence_cmd->add_option("--blocks", seq_blocks, "number of random multipole blocks")
      ->check(CLI::PositiveNumber);
  sequence_cmd->add_option("--seed", seq_seed, "PRNG seed");
  sequence_cmd->add_option("--out", seq_out, "write to file instead of stdout");

  // --- evolve -----------------------------------------------------------
  auto* evolve_cmd = app.add_subcommand("evolve", "run one configured experiment");
  CommonOptions evolve_opts;
  add_common(evolve_cmd, evolve_opts);

  // --- scan -------------------------------------------------------------
  auto* scan_cmd =
      app.add_subcommand("scan", "frequency scan: ensembles, lifetime fits, alpha table");
  CommonOptions scan_opts;
  add_common(scan_cmd, scan_opts);

  // --- fit --------------------------------------------------------------
  auto* fit_cmd = app.add_subcommand("fit", "re-fit lifetimes from an existing ensemble CSV");
  std::string fit_input;
  double fit_floor = 0.05;
  std::vector<double> fit_entropy_window{100.0, 2000.0};
  fit_cmd->add_option("--input", fit_input, "ensemble CSV")->required();
  fit_cmd->add_option("--floor", fit_floor, "imbalance fit floor");
  fit_cmd->add_option("--entropy-window", fit_entropy_window, "entropy fit window [lo hi] in ns")
      ->expected(2);

  // --- fgr --------------------------------------------------------------
  auto* fgr_cmd = app.add_subcommand("fgr", "Fermi-golden-rule heating-rate checks");
  int fgr_order = 1;
  double fgr_eps = 1.0, fgr_a = 1.0;
  std::vector<double> fgr_omegas;
  fgr_cmd->add_option("--n", fgr_order, "multipolar order")->check(CLI::NonNegativeNumber);
  fgr_cmd->add_option("--eps", fgr_eps, "spectral decay constant");
  fgr_cmd->add_option("--a", fgr_a, "prefactor");
  fgr_cmd->add_option("--omega", fgr_omegas, "angular frequencies (rad/ns)")->expected(-1);

  // --- trotter-check ----------------------------------------------------
  auto* trotter_cmd = app.add_subcommand("trotter-check", "Trotter-error ladder vs dt");
  int tc_lx = 2, tc_ly = 2, tc_order = 2, tc_blocks = 2;
  double tc_period = 20.0;
  uint64_t tc_seed = 21;
  std::vector<double> tc_dts{4.0, 2.0, 1.0, 0.5};
  trotter_cmd->add_option("--lx", tc_lx, "columns");
  trotter_cmd->add_option("--ly", tc_ly, "rows");
  trotter_cmd->add_option("--T", tc_period, "drive period in ns");
  trotter_cmd->add_option("--n", tc_order, "multipolar order");
  trotter_cmd->add_option("--blocks", tc_blocks, "multipole blocks to evolve");
  trotter_cmd->add_option("--seed", tc_seed, "sequence seed");
  trotter_cmd->add_option("--dt", tc_dts, "step sizes in ns")->expected(-1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sequence_cmd->parsed()) {
      const RmdSequence seq = generate_sequence(seq_order, seq_blocks, seq_seed);
      if (seq_out.empty()) {
        write_sequence(std::cout, seq);
      } else {
        std::ofstream out(seq_out);
        if (!out) throw std::runtime_error("cannot write '" + seq_out + "'");
        write_sequence(out, seq);
      }
      return 0;
    }

    if (evolve_cmd->parsed()) {
      const RunConfig config = configure(evolve_opts);
      const int threads = resolve_threads(evolve_opts.threads);
      const ExperimentResult result = run_experiment(config, evolve_opts.out_dir, threads);
      for (const auto& [order, period, ensemble] : result.ensembles)
        std::cout << "n=" << order << " T=" << format_number(period) << "ns: "
                  << ensemble.times_ns.size() << " records, " << ensemble.num_traces
                  << " seeds\n";
      return 0;
    }

    if (scan_cmd->parsed()) {
      const RunConfig config = configure(scan_opts);
      const int threads = resolve_threads(scan_opts.threads);
      const std::vector<AlphaRow> rows = scan_frequencies(config, scan_opts.out_dir, threads);
      for (const AlphaRow& row : rows) {
        std::cout << "n=" << row.order << " " << row.observable;
        if (row.status == "ok")
          std::cout << " alpha=" << format_number(row.alpha) << " +- "
                    << format_number(row.alpha_stderr) << "\n";
        else
          std::cout << " " << row.status << "\n";
      }
      return 0;
    }

    if (fit_cmd->parsed()) {
      const EnsembleTrace ensemble = read_ensemble_csv(fit_input);
      FitOptions options;
      options.imbalance_floor = fit_floor;
      options.entropy_window_ns = {fit_entropy_window[0], fit_entropy_window[1]};
      nlohmann::json report;
      try {
        report["imbalance"] = fit_to_json(fit_ensemble_imbalance(ensemble, options));
      } catch (const std::exception& e) {
        report["imbalance"] = {{"error", e.what()}};
      }
      for (const auto& [label, series] : ensemble.entropy_mean) {
        (void)series;
        try {
          report["entropy"][label] =
              fit_to_json(fit_ensemble_entropy(ensemble, label, options, 0.693147));
        } catch (const std::exception& e) {
          report["entropy"][label] = {{"error", e.what()}};
        }
      }
      std::cout << report.dump(2) << '\n';
      return 0;
    }

    if (fgr_cmd->parsed()) {
      if (fgr_omegas.empty()) fgr_omegas = {0.5, 1.0, 2.0, 4.0, 8.0};
      std::vector<double> rates;
      std::cout << "n=" << fgr_order << " eps=" << fgr_eps << " A=" << fgr_a << "\n";
      for (double omega : fgr_omegas) {
        FgrParams p;
        p.order = fgr_order;
        p.omega = omega;
        p.eps = fgr_eps;
        p.a_const = fgr_a;
        const double numeric = fgr_rate(p);
        const double analytic = fgr_rate_analytic(p);
        rates.push_back(numeric);
        std::cout << "Omega=" << format_number(omega) << " Gamma=" << format_number(numeric)
                  << " analytic=" << format_number(analytic)
                  << " rel_err=" << format_number(std::abs(numeric / analytic - 1.0)) << "\n";
      }
      if (fgr_omegas.size() >= 3) {
        const FitResult fit = fit_power_law(fgr_omegas, rates);
        std::cout << "ln Gamma vs ln Omega slope = " << format_number(fit.params.at("alpha"))
                  << " (theory " << -(2 * fgr_order + 1) << ")\n";
      }
      return 0;
    }

    if (trotter_cmd->parsed()) {
      const LatticeSpec lattice = build_lattice(tc_lx, tc_ly);
      DriveParams params;
      params.period_ns = tc_period;
      params.order = tc_order;
      const RmdSequence seq = generate_sequence(tc_order, tc_blocks, tc_seed);
      std::vector<double> errors;
      for (double dt : tc_dts) {
        errors.push_back(trotter_error(lattice, params, dt, seq));
        std::cout << "dt=" << format_number(dt) << " max|dI|=" << format_number(errors.back())
                  << "\n";
      }
      if (tc_dts.size() >= 3) {
        const FitResult fit = fit_power_law(tc_dts, errors);
        std::cout << "log-log slope = " << format_number(fit.params.at("alpha"))
                  << " (second order: ~2)\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
