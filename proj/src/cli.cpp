#include "jsqps/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "jsqps/core.hpp"
#include "jsqps/markov_chain.hpp"
#include "jsqps/metrics.hpp"
#include "jsqps/simulator.hpp"
#include "jsqps/sojourn_cdf.hpp"

namespace jsqps {

namespace {

struct Options {
  std::optional<int> servers;
  std::optional<double> lambda;
  std::optional<double> mu;
  std::optional<std::string> method;
  std::optional<int> chain_limit;
  int system_limit = kDefaultSystemLimit;
  double t_max = kDefaultTimeMax;
  double dt = kDefaultTimeStep;
  std::optional<double> q_max;
  std::optional<double> warmup;
  std::optional<int> trials;
  std::uint64_t seed = 0;
  std::string service = "exp";
  std::string ps_variant = "standard";
  std::vector<double> etas;
  bool urllc = false;
  std::string out_path;
  std::string config_path;
  std::string regime_map_path;
  std::optional<std::string> scale;
  bool confirm_long_run = false;
  std::string dump_samples;
  std::vector<int> servers_list;
  std::vector<double> load_list;
  std::string target;
};

/// Simulation length and (R, rho) grid of one reproduction scale.
struct ScalePreset {
  std::string name;
  double q_max;
  double q_warmup;
  int trials;
  double load_step;
  std::vector<int> servers;
  double state_budget;  // largest chain explored by the truncation sweep
};

ScalePreset scale_preset(const std::string& name) {
  if (name == "desk") {
    return {"desk", 40000.0, 2000.0, kDefaultTrials, 0.05, {1, 3, 5, 7, 10}, 2e4};
  }
  if (name == "full") {
    return {"full", kDefaultSimulationTime, kDefaultWarmup, kDefaultTrials, 0.01,
            {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 2e5};
  }
  throw ParameterError(fmt::format("unknown scale '{}' (desk or full)", name));
}

/// Comment block recording the resolved experiment.
class Header {
 public:
  explicit Header(std::string command) { add("command", std::move(command)); }

  template <class T>
  Header& add(std::string key, const T& value) {
    entries_.emplace_back(std::move(key), fmt::format("{}", value));
    return *this;
  }

  void write(std::ostream& out) const {
    for (const auto& [key, value] : entries_) {
      out << "# " << key << " = " << value << '\n';
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string join(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    s += fmt::format("{}{}", i ? "," : "", values[i]);
  }
  return s;
}

std::string join(const std::vector<int>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    s += fmt::format("{}{}", i ? "," : "", values[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Resolution of options into library objects

SystemConfig resolve_system(const Options& o) {
  if (!o.servers || !o.lambda || !o.mu) {
    throw ParameterError("--R, --lambda and --mu are required");
  }
  SystemConfig config(*o.servers, *o.lambda, *o.mu);
  config.require_stable();
  return config;
}

Hyperparameters resolve_hyper(const Options& o, int servers) {
  Hyperparameters h = default_hyperparameters(servers);
  if (o.chain_limit) {
    check_chain_limit(servers, *o.chain_limit);
    h.chain_limit = *o.chain_limit;
  }
  h.system_limit = o.system_limit;
  h.validate();
  return h;
}

std::optional<RegimeMap> resolve_map(const Options& o) {
  if (o.regime_map_path.empty()) return std::nullopt;
  return RegimeMap::load(o.regime_map_path);
}

MethodId choose_method(const std::string& text, const SystemConfig& config,
                       const std::optional<RegimeMap>& map) {
  if (text == "auto") return map ? best_method(config, *map) : best_method(config);
  if (auto id = parse_method(text)) return *id;
  throw ParameterError(fmt::format("unknown method '{}' (A..F or auto)", text));
}

ServiceDistribution resolve_service(const std::string& name, double mu) {
  if (name == "exp") return ServiceDistribution::exponential(mu);
  if (name == "uniform") return ServiceDistribution::uniform_with_rate(mu);
  if (name == "det") return ServiceDistribution::deterministic_with_rate(mu);
  throw ParameterError(
      fmt::format("unknown service distribution '{}' (exp, uniform or det)", name));
}

SimulationConfig resolve_simulation(const Options& o, const SystemConfig& system,
                                    const ScalePreset& preset) {
  SimulationConfig sim(system);
  sim.service = resolve_service(o.service, system.service_rate());
  sim.variant = PsVariant::parse(o.ps_variant);
  sim.q_max = o.q_max.value_or(preset.q_max);
  sim.q_warmup = o.warmup.value_or(preset.q_warmup);
  sim.trials = o.trials.value_or(preset.trials);
  sim.seed = o.seed;
  sim.validate();
  return sim;
}

std::vector<double> resolve_etas(const Options& o,
                                 const std::vector<double>& fallback) {
  std::vector<double> etas = o.etas;
  if (o.urllc) etas.insert(etas.end(), kUrllcLevels.begin(), kUrllcLevels.end());
  if (etas.empty()) etas = fallback;
  for (double eta : etas) {
    if (!(eta > 0.0 && eta < 1.0)) {
      throw ParameterError(
          fmt::format("percentile level must lie in (0,1), got {}", eta));
    }
  }
  return etas;
}

std::vector<double> load_grid(double step) {
  std::vector<double> loads;
  const int count = static_cast<int>(std::floor(1.0 / step + 1e-9));
  for (int k = 1; k < count; ++k) {
    loads.push_back(std::round(k * step * 1e6) / 1e6);
  }
  return loads;
}

std::vector<ScanCell> resolve_cells(const Options& o, const ScalePreset& preset) {
  const std::vector<int> servers =
      o.servers_list.empty() ? preset.servers : o.servers_list;
  const std::vector<double> loads =
      o.load_list.empty() ? load_grid(preset.load_step) : o.load_list;
  std::vector<ScanCell> cells;
  for (int r : servers) {
    for (double rho : loads) {
      SystemConfig::from_load(r, rho).require_stable();
      cells.push_back({r, rho});
    }
  }
  return cells;
}

ScalePreset resolve_scale(const Options& o, const std::string& fallback,
                          bool gated) {
  ScalePreset preset = scale_preset(o.scale.value_or(fallback));
  if (gated && preset.name == "full" && !o.confirm_long_run) {
    throw ParameterError(
        "full-scale runs take many hours; pass --confirm-long-run to proceed");
  }
  return preset;
}

void add_grid(Header& h, const Options& o) {
  h.add("tmax", o.t_max).add("dt", o.dt);
}

void add_simulation(Header& h, const SimulationConfig& sim) {
  h.add("service", sim.service.describe())
      .add("ps-variant", sim.variant.describe())
      .add("qmax", sim.q_max)
      .add("warmup", sim.q_warmup)
      .add("trials", sim.trials)
      .add("seed", sim.seed);
}

void add_system(Header& h, const SystemConfig& c) {
  h.add("R", c.servers())
      .add("lambda", c.arrival_rate())
      .add("mu", c.service_rate())
      .add("rho", c.load());
}

void add_hyper(Header& h, const Hyperparameters& hyper) {
  h.add("L1", hyper.chain_limit).add("L2", hyper.system_limit);
}

void write_cdf_rows(std::ostream& out, const SojournCdf& cdf) {
  out << "t,cdf,method\n";
  for (std::size_t i = 0; i < cdf.values.size(); ++i) {
    out << fmt::format("{:.10g},{:.12g},{}\n", cdf.grid[i], cdf.values[i],
                       cdf.source);
  }
}

/// Runs fn(i) for i in [0, n) on a small worker pool; results keep index
/// order and the lowest-index failure is rethrown.
template <class T, class Fn>
std::vector<T> parallel_cells(std::size_t n, int threads_per_cell, Fn fn) {
  std::vector<T> results(n);
  std::vector<std::exception_ptr> errors(n);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::clamp<std::size_t>(
      hw / static_cast<unsigned>(std::max(1, threads_per_cell)), 1, n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

SojournCdf simulate_cdf(const SimulationConfig& sim, const TimeGrid& grid) {
  const auto result = run_simulation(sim);
  const auto samples = result.samples();
  return aggregate_trials(samples, grid);
}

std::optional<double> try_percentile(const SojournCdf& cdf, double eta) {
  try {
    return percentile(cdf, eta);
  } catch (const SaturationError& e) {
    spdlog::warn("{}", e.what());
    return std::nullopt;
  }
}

std::string optional_field(const std::optional<double>& v) {
  return v ? fmt::format("{:.12g}", *v) : std::string();
}

// ---------------------------------------------------------------------------
// Commands

void cmd_cdf(const Options& o, std::ostream& out) {
  const SystemConfig system = resolve_system(o);
  const Hyperparameters hyper = resolve_hyper(o, system.servers());
  const TimeGrid grid = make_time_grid(o.t_max, o.dt);
  const auto map = resolve_map(o);
  const std::string requested = o.method.value_or("auto");
  const MethodId method = choose_method(requested, system, map);

  const SojournCdf cdf = compute_method(method, system, hyper, grid);
  validate_cdf(cdf);

  Header h("cdf");
  add_system(h, system);
  h.add("method", to_string(method)).add("method-requested", requested);
  add_hyper(h, hyper);
  add_grid(h, o);
  if (map) h.add("regime-map", o.regime_map_path);
  h.write(out);
  write_cdf_rows(out, cdf);
}

void cmd_percentile(const Options& o, std::ostream& out) {
  const SystemConfig system = resolve_system(o);
  const Hyperparameters hyper = resolve_hyper(o, system.servers());
  const TimeGrid grid = make_time_grid(o.t_max, o.dt);
  const auto etas = resolve_etas(o, {});
  if (etas.empty()) throw ParameterError("give at least one --eta or --urllc");
  const auto map = resolve_map(o);
  const std::string requested = o.method.value_or("auto");
  const MethodId method = choose_method(requested, system, map);

  const SojournCdf cdf = compute_method(method, system, hyper, grid);
  validate_cdf(cdf);
  std::vector<double> times;
  for (double eta : etas) times.push_back(percentile(cdf, eta));

  Header h("percentile");
  add_system(h, system);
  h.add("method", to_string(method)).add("method-requested", requested);
  add_hyper(h, hyper);
  add_grid(h, o);
  h.add("eta", join(etas));
  h.write(out);
  out << "eta,t_eta\n";
  for (std::size_t k = 0; k < etas.size(); ++k) {
    out << fmt::format("{},{:.10g}\n", etas[k], times[k]);
  }
}

void cmd_simulate(const Options& o, std::ostream& out) {
  const SystemConfig system = resolve_system(o);
  const ScalePreset preset = resolve_scale(o, "full", false);
  const SimulationConfig sim = resolve_simulation(o, system, preset);
  const TimeGrid grid = make_time_grid(o.t_max, o.dt);

  const SimulationResult result = run_simulation(sim);
  if (!o.dump_samples.empty()) write_sample_dump(o.dump_samples, result);
  const auto samples = result.samples();
  const SojournCdf cdf = aggregate_trials(samples, grid);

  Header h("simulate");
  add_system(h, system);
  add_simulation(h, sim);
  add_grid(h, o);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    double sum = 0.0;
    for (double s : samples[k]) sum += s;
    h.add(fmt::format("trial{}", k),
          fmt::format("samples={} mean={:.10g}", samples[k].size(),
                      samples[k].empty() ? 0.0 : sum / samples[k].size()));
  }
  h.write(out);
  write_cdf_rows(out, cdf);
}

void cmd_compare(const Options& o, std::ostream& out) {
  const SystemConfig system = resolve_system(o);
  const Hyperparameters hyper = resolve_hyper(o, system.servers());
  const ScalePreset preset = resolve_scale(o, "full", false);
  const SimulationConfig sim = resolve_simulation(o, system, preset);
  const TimeGrid grid = make_time_grid(o.t_max, o.dt);
  const auto etas = resolve_etas(
      o, std::vector<double>(kUrllcLevels.begin(), kUrllcLevels.end()));
  const auto map = resolve_map(o);

  std::vector<MethodId> methods(kAllMethods.begin(), kAllMethods.end());
  if (o.method) methods = {choose_method(*o.method, system, map)};

  const SojournCdf baseline = simulate_cdf(sim, grid);
  SojournModel model(system, hyper, grid);
  std::vector<ComparisonReport> reports;
  for (MethodId m : methods) {
    try {
      reports.push_back(compare(m, system, model.cdf(m), baseline, etas));
    } catch (const NumericalError& e) {
      if (methods.size() == 1) throw;
      spdlog::warn("method {} skipped: {}", to_string(m), e.what());
    }
  }

  Header h("compare");
  add_system(h, system);
  h.add("methods", o.method.value_or("all"));
  add_hyper(h, hyper);
  add_simulation(h, sim);
  add_grid(h, o);
  h.add("eta", join(etas));
  h.write(out);
  write_comparison_csv(out, reports);
}

SimulationBudget budget_of(const Options& o, const ScalePreset& preset) {
  SimulationBudget b;
  b.q_max = o.q_max.value_or(preset.q_max);
  b.q_warmup = o.warmup.value_or(preset.q_warmup);
  b.trials = o.trials.value_or(preset.trials);
  b.seed = o.seed;
  if (!(b.q_warmup >= 0.0 && b.q_warmup < b.q_max) || b.trials < 1) {
    throw ParameterError(fmt::format(
        "simulation needs 0 <= warmup < qmax and trials >= 1 (qmax={}, "
        "warmup={}, trials={})",
        b.q_max, b.q_warmup, b.trials));
  }
  return b;
}

void add_cell_axes(Header& h, const std::vector<ScanCell>& cells) {
  std::vector<int> servers;
  std::vector<double> loads;
  for (const auto& c : cells) {
    if (std::find(servers.begin(), servers.end(), c.servers) == servers.end()) {
      servers.push_back(c.servers);
    }
    if (std::find(loads.begin(), loads.end(), c.load) == loads.end()) {
      loads.push_back(c.load);
    }
  }
  h.add("servers-list", join(servers)).add("load-list", join(loads));
}

void add_budget(Header& h, const ScalePreset& preset, const SimulationBudget& b) {
  h.add("scale", preset.name)
      .add("qmax", b.q_max)
      .add("warmup", b.q_warmup)
      .add("trials", b.trials)
      .add("seed", b.seed);
}

std::vector<ScanCellResult> scan_cells(const std::vector<ScanCell>& cells,
                                       const SimulationBudget& budget,
                                       const TimeGrid& grid) {
  return parallel_cells<ScanCellResult>(
      cells.size(), budget.trials, [&](std::size_t i) {
        const std::array<ScanCell, 1> one = {cells[i]};
        auto scan = regime_scan(one, kAllMethods, budget, grid);
        return std::move(scan.cells.front());
      });
}

void cmd_regime_scan(const Options& o, std::ostream& out) {
  const ScalePreset preset = resolve_scale(o, "desk", true);
  const SimulationBudget budget = budget_of(o, preset);
  const auto cells = resolve_cells(o, preset);
  const TimeGrid grid = make_time_grid(o.t_max, o.dt);

  RegimeScan scan;
  scan.cells = scan_cells(cells, budget, grid);

  Header h("regime-scan");
  add_budget(h, preset, budget);
  add_cell_axes(h, cells);
  add_grid(h, o);
  h.write(out);
  for (const auto& cell : scan.cells) {
    std::string line = fmt::format("# cell R={} rho={} winner={}", cell.servers,
                                   cell.load,
                                   cell.winner ? to_string(*cell.winner) : "none");
    for (const auto& [m, w] : cell.distances) {
      line += fmt::format(" {}={:.6g}", to_string(m), w);
    }
    out << line << '\n';
  }
  scan.to_map().write(out);
}

void reproduce_table5(std::ostream& out) {
  Header("reproduce table5").write(out);
  out << "R,L1\n";
  for (int r = 1; r <= 10; ++r) out << fmt::format("{},{}\n", r, default_chain_limit(r));
}

void reproduce_table6(const Options& o, std::ostream& out) {
  const ScalePreset preset = resolve_scale(o, "desk", true);
  const SimulationBudget budget = budget_of(o, preset);
  const auto cells = resolve_cells(o, preset);
  const TimeGrid grid = make_time_grid(o.t_max, o.dt);
  const auto etas = resolve_etas(o, {0.9999});
  const auto map = resolve_map(o);

  struct Row {
    MethodId method{};
    std::vector<std::optional<double>> approx, simulated;
  };
  const auto rows = parallel_cells<Row>(cells.size(), budget.trials, [&](std::size_t i) {
    const SystemConfig config = SystemConfig::from_load(cells[i].servers, cells[i].load);
    Row row;
    row.method = map ? best_method(config, *map) : best_method(config);
    const SojournCdf approx =
        compute_method(row.method, config, default_hyperparameters(config.servers()), grid);
    const SojournCdf sim = simulate_baseline(config, budget, grid);
    for (double eta : etas) {
      row.approx.push_back(try_percentile(approx, eta));
      row.simulated.push_back(try_percentile(sim, eta));
    }
    return row;
  });

  Header h("reproduce table6");
  add_budget(h, preset, budget);
  add_cell_axes(h, cells);
  add_grid(h, o);
  h.add("eta", join(etas));
  h.write(out);
  out << "R,rho,method,eta,approx_pct,sim_pct,error\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t k = 0; k < etas.size(); ++k) {
      const auto& a = rows[i].approx[k];
      const auto& s = rows[i].simulated[k];
      const std::optional<double> err =
          a && s ? std::optional<double>(*a - *s) : std::nullopt;
      out << fmt::format("{},{},{},{},{},{},{}\n", cells[i].servers,
                         cells[i].load, to_string(rows[i].method), etas[k],
                         optional_field(a), optional_field(s),
                         optional_field(err));
    }
  }
}

void reproduce_fig4(const Options& o, std::ostream& out) {
  const ScalePreset preset = resolve_scale(o, "desk", true);
  const std::vector<int> servers =
      o.servers_list.empty() ? preset.servers : o.servers_list;
  const std::vector<double> loads =
      o.load_list.empty() ? std::vector<double>{0.85, 0.90, 0.95} : o.load_list;

  struct Job {
    int servers;
    double load;
    int limit;
  };
  std::vector<Job> jobs;
  for (int r : servers) {
    for (double rho : loads) {
      SystemConfig::from_load(r, rho).require_stable();
      for (int limit = 2; limit <= 22; ++limit) {
        if (std::pow(limit, r) > preset.state_budget) break;
        jobs.push_back({r, rho, limit});
      }
    }
  }
  const auto masses = parallel_cells<double>(jobs.size(), 1, [&](std::size_t i) {
    const auto config = SystemConfig::from_load(jobs[i].servers, jobs[i].load);
    const auto chain = solve_jsq_chain(config, jobs[i].limit);
    return truncation_mass(chain.steady_state, chain.states);
  });

  Header h("reproduce fig4");
  h.add("scale", preset.name).add("max-states", preset.state_budget);
  h.write(out);
  out << "R,rho,L1,boundary_mass\n";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    out << fmt::format("{},{},{},{:.12g}\n", jobs[i].servers, jobs[i].load,
                       jobs[i].limit, masses[i]);
  }
}

void reproduce_fig8(const Options& o, std::ostream& out) {
  const ScalePreset preset = resolve_scale(o, "desk", true);
  const SimulationBudget budget = budget_of(o, preset);
  const auto cells = resolve_cells(o, preset);
  const TimeGrid grid = make_time_grid(o.t_max, o.dt);
  const auto results = scan_cells(cells, budget, grid);

  Header h("reproduce fig8");
  add_budget(h, preset, budget);
  add_cell_axes(h, cells);
  add_grid(h, o);
  h.write(out);
  out << "R,rho,A,B,C,D,E,F,winner\n";
  for (const auto& cell : results) {
    std::string line = fmt::format("{},{}", cell.servers, cell.load);
    for (MethodId m : kAllMethods) {
      const auto it = cell.distances.find(m);
      line += it == cell.distances.end() ? std::string(",")
                                         : fmt::format(",{:.12g}", it->second);
    }
    line += fmt::format(",{}\n", cell.winner ? to_string(*cell.winner) : "");
    out << line;
  }
}

void reproduce_fig9(const Options& o, std::ostream& out) {
  const ScalePreset preset = resolve_scale(o, "desk", true);
  const SimulationBudget budget = budget_of(o, preset);
  const auto cells = resolve_cells(o, preset);
  const TimeGrid grid = make_time_grid(o.t_max, o.dt);
  const auto etas = resolve_etas(
      o, std::vector<double>(kUrllcLevels.begin(), kUrllcLevels.end()));
  const auto map = resolve_map(o);
  const std::array<std::string, 3> services = {"exp", "uniform", "det"};

  using Row = std::vector<std::pair<std::string, std::vector<std::optional<double>>>>;
  const auto rows = parallel_cells<Row>(cells.size(), budget.trials, [&](std::size_t i) {
    const SystemConfig config = SystemConfig::from_load(cells[i].servers, cells[i].load);
    Row row;
    for (const auto& name : services) {
      SimulationConfig sim(config);
      sim.service = resolve_service(name, config.service_rate());
      sim.q_max = budget.q_max;
      sim.q_warmup = budget.q_warmup;
      sim.trials = budget.trials;
      sim.seed = budget.seed;
      const SojournCdf cdf = simulate_cdf(sim, grid);
      std::vector<std::optional<double>> values;
      for (double eta : etas) values.push_back(try_percentile(cdf, eta));
      row.emplace_back(name, std::move(values));
    }
    const MethodId method = map ? best_method(config, *map) : best_method(config);
    std::vector<std::optional<double>> values;
    try {
      const SojournCdf cdf = compute_method(
          method, config, default_hyperparameters(config.servers()), grid);
      for (double eta : etas) values.push_back(try_percentile(cdf, eta));
    } catch (const NumericalError& e) {
      spdlog::warn("R={} rho={} method {}: {}", config.servers(), config.load(),
                   to_string(method), e.what());
      values.assign(etas.size(), std::nullopt);
    }
    row.emplace_back(fmt::format("method_{}", to_string(method)), std::move(values));
    return row;
  });

  Header h("reproduce fig9");
  add_budget(h, preset, budget);
  add_cell_axes(h, cells);
  add_grid(h, o);
  h.add("eta", join(etas));
  h.write(out);
  out << "R,rho,source,eta,t_eta\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (const auto& [source, values] : rows[i]) {
      for (std::size_t k = 0; k < etas.size(); ++k) {
        out << fmt::format("{},{},{},{},{}\n", cells[i].servers, cells[i].load,
                           source, etas[k], optional_field(values[k]));
      }
    }
  }
}

void cmd_reproduce(const Options& o, std::ostream& out) {
  if (o.target == "table5") return reproduce_table5(out);
  if (o.target == "table6") return reproduce_table6(o, out);
  if (o.target == "fig4") return reproduce_fig4(o, out);
  if (o.target == "fig8") return reproduce_fig8(o, out);
  if (o.target == "fig9") return reproduce_fig9(o, out);
  throw ParameterError(fmt::format(
      "unknown reproduction target '{}' (table5, table6, fig4, fig8, fig9)",
      o.target));
}

// ---------------------------------------------------------------------------
// Argument plumbing

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParameterError(
      fmt::format("config key '{}' expects true or false, got '{}'", key, value));
}

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError(fmt::format("cannot open config file '{}'", path));
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParameterError(
          fmt::format("{}:{}: expected 'key = value'", path, line_no));
    }
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    entries.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return entries;
}

bool given_on_command_line(const std::vector<std::string>& args,
                           const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

/// Appends config-file entries the command line does not already set.
void merge_config(std::vector<std::string>& args, const CLI::App& command,
                  const std::string& path) {
  const std::vector<std::string> given = args;
  for (const auto& [key, value] : read_config(path)) {
    const std::string flag = "--" + key;
    const CLI::Option* option = command.get_option_no_throw(flag);
    if (option == nullptr || key == "config") {
      throw ParameterError(fmt::format(
          "config file '{}': key '{}' is not an option of '{}'", path, key,
          command.get_name()));
    }
    if (given_on_command_line(given, flag)) continue;
    if (option->get_expected_min() == 0) {
      if (parse_bool(key, value)) args.push_back(flag);
      continue;
    }
    std::istringstream items(value);
    std::string item;
    if (option->get_items_expected_max() > 1) {
      while (std::getline(items, item, ',')) {
        for (std::istringstream words(item); words >> item;) {
          args.push_back(flag);
          args.push_back(item);
        }
      }
    } else {
      args.push_back(flag);
      args.push_back(value);
    }
  }
}

void add_system_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--R", o.servers, "number of servers");
  cmd->add_option("--lambda", o.lambda, "total arrival rate");
  cmd->add_option("--mu", o.mu, "service rate of each server");
}

void add_analytic_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--method", o.method, "A..F or auto");
  cmd->add_option("--L1", o.chain_limit, "per-server Markov chain limit");
  cmd->add_option("--L2", o.system_limit, "system-wide truncation limit");
  cmd->add_option("--regime-map", o.regime_map_path,
                  "file of 'R rho_low rho_high method' rows for auto");
}

void add_grid_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--tmax", o.t_max, "end of the time grid");
  cmd->add_option("--dt", o.dt, "time grid step");
}

void add_eta_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--eta", o.etas, "percentile level (repeatable)")
      ->allow_extra_args(false);
  cmd->add_flag("--urllc", o.urllc, "add levels 0.99, 0.999, 0.9999, 0.99999");
}

void add_simulation_options(CLI::App* cmd, Options& o, bool per_system) {
  cmd->add_option("--qmax", o.q_max, "simulated time per trial");
  cmd->add_option("--warmup", o.warmup, "arrivals before this date are ignored");
  cmd->add_option("--trials", o.trials, "independent trials");
  cmd->add_option("--seed", o.seed, "master seed");
  if (per_system) {
    cmd->add_option("--service", o.service, "exp, uniform or det");
    cmd->add_option("--ps-variant", o.ps_variant,
                    "standard, limited:k or capacitated:k");
  }
}

void add_scan_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--servers-list", o.servers_list, "comma-separated R values")
      ->delimiter(',');
  cmd->add_option("--load-list", o.load_list, "comma-separated rho values")
      ->delimiter(',');
  cmd->add_flag("--confirm-long-run", o.confirm_long_run,
                "allow full-scale runs");
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--out", o.out_path, "output file (default stdout)");
  cmd->add_option("--config", o.config_path, "file of 'key = value' lines");
}

class LoggerScope {
 public:
  explicit LoggerScope(std::ostream& err) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("jsqps", std::move(sink));
    logger->set_pattern("jsqps: %l: %v");
    logger->set_level(spdlog::level::warn);
    spdlog::set_default_logger(std::move(logger));
  }
  ~LoggerScope() { spdlog::set_default_logger(previous_); }
  LoggerScope(const LoggerScope&) = delete;
  LoggerScope& operator=(const LoggerScope&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  LoggerScope logging(err);
  Options o;
  CLI::App app{"Sojourn-time distributions of JSQ processor-sharing server farms",
               "jsqps"};
  app.require_subcommand(1);

  auto* cdf = app.add_subcommand("cdf", "P(T <= t) on the time grid");
  auto* pct = app.add_subcommand("percentile", "sojourn-time percentiles");
  auto* sim = app.add_subcommand("simulate", "empirical CDF from simulation");
  auto* cmp = app.add_subcommand("compare", "methods against a simulation");
  auto* scan = app.add_subcommand("regime-scan", "most accurate method per (R, rho)");
  auto* rep = app.add_subcommand("reproduce", "datasets of the published exhibits");

  for (auto* cmd : {cdf, pct, sim, cmp}) add_system_options(cmd, o);
  for (auto* cmd : {cdf, pct, cmp, rep}) add_analytic_options(cmd, o);
  for (auto* cmd : {cdf, pct, sim, cmp, scan, rep}) {
    add_grid_options(cmd, o);
    add_common(cmd, o);
  }
  for (auto* cmd : {pct, cmp, rep}) add_eta_options(cmd, o);
  add_simulation_options(sim, o, true);
  add_simulation_options(cmp, o, true);
  add_simulation_options(scan, o, false);
  add_simulation_options(rep, o, false);
  for (auto* cmd : {sim, cmp, scan, rep}) {
    cmd->add_option("--scale", o.scale, "desk or full");
  }
  for (auto* cmd : {scan, rep}) add_scan_options(cmd, o);
  sim->add_option("--dump-samples", o.dump_samples,
                  "write <prefix>.trial<k>.samples files");
  rep->add_option("target", o.target, "table5, table6, fig4, fig8 or fig9")
      ->required();

  std::vector<std::string> args(argv, argv + argc);
  try {
    // The config file is merged into the argument list so that flags win.
    for (std::size_t i = 1; i < args.size(); ++i) {
      std::string path;
      if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
      if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
      if (path.empty()) continue;
      const auto command = std::find_if(args.begin() + 1, args.end(), [&](const auto& a) {
        return app.get_subcommand_no_throw(a) != nullptr;
      });
      if (command == args.end()) throw ParameterError("--config needs a command");
      merge_config(args, *app.get_subcommand(*command), path);
      break;
    }
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kExitParameter;
  }

  std::vector<const char*> raw;
  for (const auto& a : args) raw.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitParameter;
  }

  std::ostringstream buffer;
  try {
    if (cdf->parsed()) cmd_cdf(o, buffer);
    if (pct->parsed()) cmd_percentile(o, buffer);
    if (sim->parsed()) cmd_simulate(o, buffer);
    if (cmp->parsed()) cmd_compare(o, buffer);
    if (scan->parsed()) cmd_regime_scan(o, buffer);
    if (rep->parsed()) cmd_reproduce(o, buffer);
    if (o.out_path.empty()) {
      out << buffer.str();
    } else {
      std::ofstream file(o.out_path, std::ios::binary);
      if (!(file << buffer.str()) || !file.flush()) {
        throw ResourceError(fmt::format("cannot write '{}'", o.out_path));
      }
    }
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kExitParameter;
  } catch (const SaturationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ResourceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitResource;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kExitResource;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace jsqps
