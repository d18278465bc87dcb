#include "rmdsim/run.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "rmdsim/exact.hpp"
#include "rmdsim/gmps.hpp"
#include "rmdsim/peps.hpp"
#include "rmdsim/sequence.hpp"

namespace rmdsim {

namespace {

using nlohmann::json;

void require_keys(const json& object, const std::string& where,
                  const std::vector<std::string>& known) {
  if (!object.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, value] : object.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

EngineKind engine_kind_from(const std::string& name) {
  if (name == "exact") return EngineKind::Exact;
  if (name == "gmps") return EngineKind::Gmps;
  if (name == "peps") return EngineKind::Peps;
  throw std::invalid_argument("config: engine.type must be exact, gmps or peps, got '" + name +
                              "'");
}

}  // namespace

void RunConfig::validate() const {
  if (lx < 1 || ly < 1) throw std::invalid_argument("config: lattice dimensions must be positive");
  if (seeds.empty()) throw std::invalid_argument("config: at least one seed is required");
  if (periods_ns.empty()) throw std::invalid_argument("config: params.T_ns must be non-empty");
  for (double t : periods_ns)
    if (!(t > 0.0)) throw std::invalid_argument("config: every T_ns must be positive");
  for (int n : orders)
    if (n < 0) throw std::invalid_argument("config: multipolar orders must be non-negative");
  if (orders.empty()) throw std::invalid_argument("config: params.n must be non-empty");
  if (record_every_periods < 1)
    throw std::invalid_argument("config: record_every_periods must be >= 1");
  for (double t : periods_ns)
    if (horizon_ns < t)
      throw std::invalid_argument("config: horizon_ns must cover at least one period");
  if (engine.kind != EngineKind::Exact) {
    if (engine.chi < 1) throw std::invalid_argument("config: engine.chi must be >= 1");
    if (!(engine.dt_ns > 0.0)) throw std::invalid_argument("config: engine.dt_ns must be > 0");
  }
  const LatticeSpec lattice = build_lattice(lx, ly);
  for (const Subsystem& sub : subsystems) (void)sub.site_indices(lattice);
}

RunConfig parse_config(const std::string& json_text) {
  json root = json::parse(json_text);
  require_keys(root, "top level",
               {"lattice", "params", "engine", "seeds", "horizon_ns", "record_every_periods",
                "subsystems", "fit", "output_dir"});
  RunConfig config;

  const json& lattice = root.at("lattice");
  require_keys(lattice, "lattice", {"Lx", "Ly"});
  config.lx = lattice.at("Lx").get<int>();
  config.ly = lattice.at("Ly").get<int>();

  const json& params = root.at("params");
  require_keys(params, "params", {"J_MHz", "h0_MHz", "delta_h", "T_ns", "n"});
  config.j_mhz = params.at("J_MHz").get<double>();
  config.h0_mhz = params.at("h0_MHz").get<double>();
  config.delta_h = params.at("delta_h").get<double>();
  config.periods_ns = params.at("T_ns").get<std::vector<double>>();
  config.orders = params.at("n").get<std::vector<int>>();

  const json& engine = root.at("engine");
  require_keys(engine, "engine",
               {"type", "basis", "dense_cap_full", "dense_cap_sector", "gate_crossover_sites",
                "chi", "dt_ns", "svd_threshold", "entropy_span_cap", "boundary_chi"});
  config.engine.kind = engine_kind_from(engine.at("type").get<std::string>());
  if (engine.contains("basis")) config.engine.basis = engine.at("basis").get<std::string>();
  if (config.engine.basis != "auto" && config.engine.basis != "full" &&
      config.engine.basis != "sector")
    throw std::invalid_argument("config: engine.basis must be auto, full or sector");
  if (engine.contains("dense_cap_full"))
    config.engine.dense_cap_full = engine.at("dense_cap_full").get<int>();
  if (engine.contains("dense_cap_sector"))
    config.engine.dense_cap_sector = engine.at("dense_cap_sector").get<int>();
  if (engine.contains("gate_crossover_sites"))
    config.engine.gate_crossover_sites = engine.at("gate_crossover_sites").get<int>();
  if (engine.contains("chi")) config.engine.chi = engine.at("chi").get<int>();
  if (engine.contains("dt_ns")) config.engine.dt_ns = engine.at("dt_ns").get<double>();
  if (engine.contains("svd_threshold"))
    config.engine.svd_threshold = engine.at("svd_threshold").get<double>();
  if (engine.contains("entropy_span_cap"))
    config.engine.entropy_span_cap = engine.at("entropy_span_cap").get<int>();
  if (engine.contains("boundary_chi"))
    config.engine.boundary_chi = engine.at("boundary_chi").get<int>();

  config.seeds = root.at("seeds").get<std::vector<uint64_t>>();
  config.horizon_ns = root.at("horizon_ns").get<double>();
  if (root.contains("record_every_periods"))
    config.record_every_periods = root.at("record_every_periods").get<int>();

  if (root.contains("subsystems")) {
    const json& subs = root.at("subsystems");
    if (!subs.is_object())
      throw std::invalid_argument("config: subsystems must map labels to site lists");
    for (const auto& [label, sites] : subs.items()) {
      Subsystem sub;
      sub.label = label;
      for (const auto& pair : sites) {
        if (!pair.is_array() || pair.size() != 2)
          throw std::invalid_argument("config: subsystem sites must be [x, y] pairs");
        sub.sites.push_back({pair[0].get<int>(), pair[1].get<int>()});
      }
      config.subsystems.push_back(std::move(sub));
    }
  }

  if (root.contains("fit")) {
    const json& fit = root.at("fit");
    require_keys(fit, "fit",
                 {"imbalance_floor", "imbalance_window_ns", "entropy_window_ns",
                  "prethermal_window_ns"});
    if (fit.contains("imbalance_floor"))
      config.fit.imbalance_floor = fit.at("imbalance_floor").get<double>();
    auto window = [](const json& j) {
      if (!j.is_array() || j.size() != 2)
        throw std::invalid_argument("config: fit windows must be [t_lo, t_hi]");
      return FitWindow{j[0].get<double>(), j[1].get<double>()};
    };
    if (fit.contains("imbalance_window_ns"))
      config.fit.imbalance_window_ns = window(fit.at("imbalance_window_ns"));
    if (fit.contains("entropy_window_ns"))
      config.fit.entropy_window_ns = window(fit.at("entropy_window_ns"));
    if (fit.contains("prethermal_window_ns"))
      config.fit.prethermal_window_ns = window(fit.at("prethermal_window_ns"));
  }

  if (root.contains("output_dir")) config.output_dir = root.at("output_dir").get<std::string>();

  config.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

EnsembleTrace average_trajectories(const std::vector<EvolutionTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("cannot average zero trajectories");
  const size_t points = traces.front().times_ns.size();
  for (const EvolutionTrace& trace : traces) {
    if (trace.times_ns.size() != points)
      throw std::invalid_argument("trajectories have different record counts");
    for (size_t i = 0; i < points; ++i)
      if (std::abs(trace.times_ns[i] - traces.front().times_ns[i]) > 1e-9)
        throw std::invalid_argument("trajectories have misaligned time grids");
  }

  EnsembleTrace ensemble;
  ensemble.num_traces = static_cast<int>(traces.size());
  ensemble.times_ns = traces.front().times_ns;

  // Mean then sample SD (n-1 denominator), accumulated in seed order.
  auto reduce = [&](auto&& getter, std::vector<double>& mean, std::vector<double>* sd) {
    mean.assign(points, 0.0);
    for (const EvolutionTrace& trace : traces) {
      const std::vector<double>& series = getter(trace);
      for (size_t i = 0; i < points; ++i) mean[i] += series[i];
    }
    for (double& m : mean) m /= traces.size();
    if (!sd) return;
    sd->assign(points, 0.0);
    if (traces.size() > 1) {
      for (const EvolutionTrace& trace : traces) {
        const std::vector<double>& series = getter(trace);
        for (size_t i = 0; i < points; ++i) {
          const double d = series[i] - mean[i];
          (*sd)[i] += d * d;
        }
      }
      for (double& v : *sd) v = std::sqrt(v / (traces.size() - 1));
    }
  };

  reduce([](const EvolutionTrace& t) -> const std::vector<double>& { return t.imbalance; },
         ensemble.imbalance_mean, &ensemble.imbalance_sd);
  reduce([](const EvolutionTrace& t) -> const std::vector<double>& { return t.n_total; },
         ensemble.n_total_mean, nullptr);
  for (const auto& [label, series] : traces.front().entropies) {
    (void)series;
    const std::string key = label;
    reduce(
        [&key](const EvolutionTrace& t) -> const std::vector<double>& {
          return t.entropies.at(key);
        },
        ensemble.entropy_mean[key], &ensemble.entropy_sd[key]);
  }
  if (!traces.front().fidelity.empty())
    reduce([](const EvolutionTrace& t) -> const std::vector<double>& { return t.fidelity; },
           ensemble.fidelity_mean, nullptr);
  return ensemble;
}

TraceProvider make_engine_provider(const RunConfig& config) {
  return [config](int order, double period_ns, uint64_t seed) -> EvolutionTrace {
    const LatticeSpec lattice = build_lattice(config.lx, config.ly);
    DriveParams params;
    params.j_mhz = config.j_mhz;
    params.h0_mhz = config.h0_mhz;
    params.delta_h = config.delta_h;
    params.period_ns = period_ns;
    params.order = order;

    const int periods_needed =
        static_cast<int>(std::ceil(config.horizon_ns / period_ns - 1e-9));
    const int block = 1 << order;
    const int blocks = (periods_needed + block - 1) / block;
    const RmdSequence seq = generate_sequence(order, blocks, seed);

    ObserverSet observers;
    observers.entropy_subsystems = config.subsystems;

    switch (config.engine.kind) {
      case EngineKind::Exact: {
        const int sites = lattice.num_sites();
        if (sites >= config.engine.gate_crossover_sites) {
          GateStateEvolver evolver(lattice, params, config.engine.dt_ns, SplitKind::FiveTerm);
          return evolver.evolve(seq, config.record_every_periods, observers);
        }
        BasisMode mode = BasisMode::Sector;
        if (config.engine.basis == "full" || (config.engine.basis == "auto" && sites <= 12))
          mode = BasisMode::Full;
        DenseCaps caps{config.engine.dense_cap_full, config.engine.dense_cap_sector};
        ExactEngine engine(lattice, params, mode, caps);
        return engine.evolve(seq, config.record_every_periods, observers);
      }
      case EngineKind::Gmps: {
        GroupedMps mps = GroupedMps::init(lattice, density_wave_state(lattice),
                                          config.engine.chi, config.engine.svd_threshold);
        return evolve_gmps(mps, seq, params, config.engine.dt_ns, config.record_every_periods,
                           observers, config.engine.entropy_span_cap);
      }
      case EngineKind::Peps: {
        PepsState peps = PepsState::init(lattice, density_wave_state(lattice), config.engine.chi,
                                         config.engine.svd_threshold);
        return evolve_peps(peps, seq, params, config.engine.dt_ns, config.record_every_periods,
                           observers, config.engine.boundary_chi);
      }
    }
    throw std::logic_error("unreachable engine kind");
  };
}

std::vector<EvolutionTrace> run_ensemble(const RunConfig& config, int order, double period_ns,
                                         int threads, const TraceProvider& provider) {
  std::vector<EvolutionTrace> traces(config.seeds.size());
  std::atomic<size_t> next{0};
  std::vector<std::string> errors(config.seeds.size());
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= config.seeds.size()) return;
      try {
        traces[i] = provider(order, period_ns, config.seeds[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int pool = std::max(1, std::min<int>(threads, static_cast<int>(config.seeds.size())));
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> workers;
    for (int t = 0; t < pool; ++t) workers.emplace_back(worker);
    for (std::thread& t : workers) t.join();
  }
  for (size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      throw std::runtime_error("seed " + std::to_string(config.seeds[i]) +
                               " failed: " + errors[i]);
  return traces;
}

std::string format_number(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", value);
  return buffer;
}

namespace {

std::vector<std::string> entropy_labels(const EvolutionTrace& trace) {
  std::vector<std::string> labels;
  for (const auto& [label, series] : trace.entropies) {
    (void)series;
    labels.push_back(label);
  }
  return labels;
}

std::string tag_for(int order, double period_ns) {
  std::ostringstream tag;
  tag << "n" << order << "_T" << format_number(period_ns);
  return tag.str();
}

}  // namespace

void write_trace_csv(const std::string& path, const EvolutionTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file '" + path + "'");
  out << "t_ns,imbalance";
  const auto labels = entropy_labels(trace);
  for (const auto& label : labels) out << ",S_" << label;
  out << ",n_total,fidelity\n";
  for (size_t i = 0; i < trace.times_ns.size(); ++i) {
    out << format_number(trace.times_ns[i]) << ',' << format_number(trace.imbalance[i]);
    for (const auto& label : labels) out << ',' << format_number(trace.entropies.at(label)[i]);
    out << ',' << format_number(trace.n_total[i]) << ','
        << format_number(trace.fidelity.empty() ? 1.0 : trace.fidelity[i]) << '\n';
  }
}

void write_ensemble_csv(const std::string& path, const EnsembleTrace& ensemble) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write ensemble file '" + path + "'");
  out << "t_ns,imbalance_mean,imbalance_sd";
  for (const auto& [label, series] : ensemble.entropy_mean) {
    (void)series;
    out << ",S_" << label << "_mean,S_" << label << "_sd";
  }
  out << ",n_total_mean,fidelity_mean\n";
  for (size_t i = 0; i < ensemble.times_ns.size(); ++i) {
    out << format_number(ensemble.times_ns[i]) << ','
        << format_number(ensemble.imbalance_mean[i]) << ','
        << format_number(ensemble.imbalance_sd[i]);
    for (const auto& [label, series] : ensemble.entropy_mean) {
      out << ',' << format_number(series[i]) << ','
          << format_number(ensemble.entropy_sd.at(label)[i]);
    }
    out << ',' << format_number(ensemble.n_total_mean[i]) << ','
        << format_number(ensemble.fidelity_mean.empty() ? 1.0 : ensemble.fidelity_mean[i])
        << '\n';
  }
}

EnsembleTrace read_ensemble_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ensemble file '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty ensemble file '" + path + "'");
  std::vector<std::string> columns;
  std::stringstream hs(header);
  std::string column;
  while (std::getline(hs, column, ',')) columns.push_back(column);

  EnsembleTrace ensemble;
  std::vector<std::string> entropy_cols;
  for (const std::string& c : columns)
    if (c.rfind("S_", 0) == 0 && c.size() > 7 && c.substr(c.size() - 5) == "_mean") {
      const std::string label = c.substr(2, c.size() - 7);
      entropy_cols.push_back(label);
      ensemble.entropy_mean[label] = {};
      ensemble.entropy_sd[label] = {};
    }

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<double> values;
    std::string cell;
    while (std::getline(ls, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() != columns.size())
      throw std::runtime_error("malformed row in ensemble file '" + path + "'");
    for (size_t c = 0; c < columns.size(); ++c) {
      const std::string& name = columns[c];
      if (name == "t_ns")
        ensemble.times_ns.push_back(values[c]);
      else if (name == "imbalance_mean")
        ensemble.imbalance_mean.push_back(values[c]);
      else if (name == "imbalance_sd")
        ensemble.imbalance_sd.push_back(values[c]);
      else if (name == "n_total_mean")
        ensemble.n_total_mean.push_back(values[c]);
      else if (name == "fidelity_mean")
        ensemble.fidelity_mean.push_back(values[c]);
      else if (name.rfind("S_", 0) == 0 && name.substr(name.size() - 5) == "_mean")
        ensemble.entropy_mean[name.substr(2, name.size() - 7)].push_back(values[c]);
      else if (name.rfind("S_", 0) == 0 && name.substr(name.size() - 3) == "_sd")
        ensemble.entropy_sd[name.substr(2, name.size() - 5)].push_back(values[c]);
      else
        throw std::runtime_error("unknown column '" + name + "' in ensemble file");
    }
  }
  return ensemble;
}

ExperimentResult run_experiment(const RunConfig& config, const std::string& out_dir, int threads,
                                const TraceProvider& provider) {
  const auto started = std::chrono::steady_clock::now();
  const std::string target = out_dir.empty() ? config.output_dir : out_dir;
  if (target.empty())
    throw std::invalid_argument("no output directory: set output_dir in the config or pass --out");
  std::error_code ec;
  std::filesystem::create_directories(target, ec);
  if (ec || !std::filesystem::is_directory(target))
    throw std::runtime_error("cannot create output directory '" + target + "'");

  const TraceProvider trace_provider = provider ? provider : make_engine_provider(config);
  ExperimentResult result;
  for (int order : config.orders)
    for (double period : config.periods_ns) {
      const std::vector<EvolutionTrace> traces =
          run_ensemble(config, order, period, threads, trace_provider);
      for (size_t i = 0; i < traces.size(); ++i)
        write_trace_csv(target + "/trace_" + tag_for(order, period) + "_seed" +
                            std::to_string(config.seeds[i]) + ".csv",
                        traces[i]);
      EnsembleTrace ensemble = average_trajectories(traces);
      write_ensemble_csv(target + "/ensemble_" + tag_for(order, period) + ".csv", ensemble);
      result.ensembles.emplace_back(order, period, std::move(ensemble));
    }

  const double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json meta;
  meta["version"] = kVersion;
  meta["wall_time_s"] = wall_s;
  meta["lattice"] = {{"Lx", config.lx}, {"Ly", config.ly}};
  meta["params"] = {{"J_MHz", config.j_mhz}, {"h0_MHz", config.h0_mhz},
                    {"delta_h", config.delta_h}, {"T_ns", config.periods_ns},
                    {"n", config.orders}};
  meta["seeds"] = config.seeds;
  meta["horizon_ns"] = config.horizon_ns;
  meta["record_every_periods"] = config.record_every_periods;
  std::ofstream meta_out(target + "/metadata.json");
  meta_out << meta.dump(2) << '\n';
  return result;
}

FitResult fit_ensemble_imbalance(const EnsembleTrace& ensemble, const FitOptions& fit) {
  FitWindow window;
  if (fit.imbalance_window_ns) {
    window = *fit.imbalance_window_ns;
  } else {
    window.t_lo = 0.0;
    window.t_hi = ensemble.times_ns.back();
    for (size_t i = 0; i < ensemble.times_ns.size(); ++i)
      if (ensemble.imbalance_mean[i] < fit.imbalance_floor) {
        window.t_hi = ensemble.times_ns[i];
        break;
      }
  }
  return fit_exponential_decay(ensemble.times_ns, ensemble.imbalance_mean, window,
                               fit.imbalance_floor / 2.0);
}

FitResult fit_ensemble_entropy(const EnsembleTrace& ensemble, const std::string& label,
                               const FitOptions& fit, double page_init) {
  return fit_saturating_entropy(ensemble.times_ns, ensemble.entropy_mean.at(label),
                                fit.entropy_window_ns, page_init);
}

std::vector<AlphaRow> scan_frequencies(const RunConfig& config, const std::string& out_dir,
                                       int threads, const TraceProvider& provider) {
  if (config.periods_ns.size() < 3)
    throw std::invalid_argument("frequency scan needs at least 3 T_ns values");
  const ExperimentResult experiment = run_experiment(config, out_dir, threads, provider);

  std::vector<AlphaRow> rows;
  for (int order : config.orders) {
    // Collect lifetimes per observable across periods.
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> points;
    std::map<std::string, std::string> failures;
    for (const auto& [n, period, ensemble] : experiment.ensembles) {
      if (n != order) continue;
      try {
        const FitResult fit = fit_ensemble_imbalance(ensemble, config.fit);
        const double tau = fit.params.at("tau_I");
        if (std::isfinite(tau)) {
          points["imbalance"].first.push_back(period);
          points["imbalance"].second.push_back(tau);
        } else {
          failures["imbalance"] = "no decay at T=" + format_number(period);
        }
      } catch (const std::exception& e) {
        failures["imbalance"] = e.what();
      }
      for (const Subsystem& sub : config.subsystems) {
        const std::string key = "entropy:" + sub.label;
        try {
          const FitResult fit = fit_ensemble_entropy(
              ensemble, sub.label, config.fit, page_value(static_cast<int>(sub.sites.size())));
          points[key].first.push_back(period);
          points[key].second.push_back(fit.params.at("tau_S"));
        } catch (const std::exception& e) {
          failures[key] = e.what();
        }
      }
    }

    for (auto& [observable, data] : points) {
      AlphaRow row;
      row.order = order;
      row.observable = observable;
      row.periods_ns = data.first;
      row.tau_ns = data.second;
      const auto failed = failures.find(observable);
      if (failed != failures.end()) {
        row.status = "error: " + failed->second;
        rows.push_back(std::move(row));
        continue;
      }
      try {
        std::vector<double> inverse_t;
        for (double period : data.first) inverse_t.push_back(1.0 / period);
        const FitResult fit = fit_power_law(inverse_t, data.second);
        row.alpha = fit.params.at("alpha");
        row.alpha_stderr = fit.stderrs.at("alpha");
      } catch (const std::exception& e) {
        row.status = std::string("error: ") + e.what();
      }
      rows.push_back(std::move(row));
    }
    for (const auto& [observable, message] : failures)
      if (!points.count(observable)) {
        AlphaRow row;
        row.order = order;
        row.observable = observable;
        row.status = "error: " + message;
        rows.push_back(std::move(row));
      }
  }

  const std::string target = out_dir.empty() ? config.output_dir : out_dir;
  write_alpha_rows(target + "/alpha_table.jsonl", rows);
  return rows;
}

void write_alpha_rows(const std::string& path, const std::vector<AlphaRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write alpha table '" + path + "'");
  for (const AlphaRow& row : rows) {
    json line;
    line["n"] = row.order;
    line["observable"] = row.observable;
    line["alpha"] = row.alpha;
    line["alpha_stderr"] = row.alpha_stderr;
    line["T_ns"] = row.periods_ns;
    line["tau_ns"] = row.tau_ns;
    line["status"] = row.status;
    out << line.dump() << '\n';
  }
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RMDSIM_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  return 1;
}

}  // namespace rmdsim
