#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rmdsim/analysis.hpp"
#include "rmdsim/lattice.hpp"
#include "rmdsim/observables.hpp"

namespace rmdsim {

inline constexpr const char* kVersion = "0.2.0";

enum class EngineKind { Exact, Gmps, Peps };

struct EngineOptions {
  EngineKind kind = EngineKind::Exact;
  // exact
  std::string basis = "auto";  // auto | full | sector
  int dense_cap_full = 16;
  int dense_cap_sector = 20;
  int gate_crossover_sites = 15;  // switch to the Trotter gate evolver at/after this size
  // tensor engines
  int chi = 96;
  double dt_ns = 3.0;
  double svd_threshold = 1e-12;
  int entropy_span_cap = 2;  // gmps
  int boundary_chi = 16;     // peps
};

struct FitOptions {
  double imbalance_floor = 0.05;
  std::optional<FitWindow> imbalance_window_ns;  // default: [0, first drop below floor]
  FitWindow entropy_window_ns{100.0, 2000.0};
  FitWindow prethermal_window_ns{30.0, 100.0};
};

struct RunConfig {
  int lx = 2;
  int ly = 4;
  double j_mhz = 2.0;
  double h0_mhz = 10.0;
  double delta_h = 1.2;
  std::vector<double> periods_ns{4.0};
  std::vector<int> orders{1};
  EngineOptions engine;
  std::vector<uint64_t> seeds;
  double horizon_ns = 2000.0;
  int record_every_periods = 1;
  std::vector<Subsystem> subsystems;
  FitOptions fit;
  std::string output_dir;

  void validate() const;
};

/// Strict parse: unknown keys anywhere are errors, not warnings.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

/// Pointwise mean and sample standard deviation over seeds.
struct EnsembleTrace {
  std::vector<double> times_ns;
  std::vector<double> imbalance_mean, imbalance_sd;
  std::map<std::string, std::vector<double>> entropy_mean, entropy_sd;
  std::vector<double> n_total_mean;
  std::vector<double> fidelity_mean;
  int num_traces = 0;
};

EnsembleTrace average_trajectories(const std::vector<EvolutionTrace>& traces);

/// One trajectory for (order, period, seed); the default provider dispatches
/// on the configured engine. Tests may substitute synthetic providers.
using TraceProvider = std::function<EvolutionTrace(int order, double period_ns, uint64_t seed)>;
TraceProvider make_engine_provider(const RunConfig& config);

/// All trajectories of one (order, period) ensemble, fanned out over a
/// worker pool; results are reduced in seed order regardless of scheduling.
std::vector<EvolutionTrace> run_ensemble(const RunConfig& config, int order, double period_ns,
                                         int threads, const TraceProvider& provider);

struct ExperimentResult {
  // (order, period) -> ensemble, in config order.
  std::vector<std::tuple<int, double, EnsembleTrace>> ensembles;
};

/// Full experiment: per-seed trace CSVs, one ensemble CSV per (n, T), and a
/// metadata echo. out_dir overrides config.output_dir when non-empty.
ExperimentResult run_experiment(const RunConfig& config, const std::string& out_dir, int threads,
                                const TraceProvider& provider = {});

struct AlphaRow {
  int order = 0;
  std::string observable;  // "imbalance" or "entropy:<label>"
  double alpha = 0.0;
  double alpha_stderr = 0.0;
  std::vector<double> periods_ns;
  std::vector<double> tau_ns;
  std::string status = "ok";
};

/// Frequency scan: ensembles per (n, T), lifetime fits, then log-log slopes
/// tau ~ (1/T)^alpha per order and observable. Failed fits mark their row
/// and the scan continues.
std::vector<AlphaRow> scan_frequencies(const RunConfig& config, const std::string& out_dir,
                                       int threads, const TraceProvider& provider = {});

/// Lifetime of the mean imbalance decay under the configured window rule.
FitResult fit_ensemble_imbalance(const EnsembleTrace& ensemble, const FitOptions& fit);
/// Saturation fit of one mean entropy series.
FitResult fit_ensemble_entropy(const EnsembleTrace& ensemble, const std::string& label,
                               const FitOptions& fit, double page_init);

/// Fixed 12-significant-digit formatting shared by all numeric output.
std::string format_number(double value);

void write_trace_csv(const std::string& path, const EvolutionTrace& trace);
void write_ensemble_csv(const std::string& path, const EnsembleTrace& ensemble);
EnsembleTrace read_ensemble_csv(const std::string& path);
void write_alpha_rows(const std::string& path, const std::vector<AlphaRow>& rows);

/// Thread budget: explicit argument, else RMDSIM_THREADS, else 1.
int resolve_threads(int requested);

}  // namespace rmdsim
