#include "jsqps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "jsqps/simulator.hpp"

namespace jsqps {

double wasserstein(const SojournCdf& g, const SojournCdf& h) {
  if (!g.grid.same_as(h.grid) || g.values.size() != h.values.size() ||
      g.values.size() != g.grid.size()) {
    throw ParameterError(fmt::format(
        "Wasserstein distance needs CDFs on the same grid ('{}' has {} points "
        "step {}, '{}' has {} points step {})",
        g.source, g.grid.size(), g.grid.step(), h.source, h.grid.size(),
        h.grid.step()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < g.values.size(); ++i) {
    sum += std::abs(g.values[i] - h.values[i]);
  }
  return sum * g.grid.step();
}

double percentile_error(const SojournCdf& approx, const SojournCdf& simulated,
                        double eta) {
  return percentile(approx, eta) - percentile(simulated, eta);
}

ComparisonReport compare(MethodId method, const SystemConfig& config,
                         const SojournCdf& approx, const SojournCdf& simulated,
                         std::span<const double> etas) {
  ComparisonReport report;
  report.method = method;
  report.servers = config.servers();
  report.load = config.load();
  report.wasserstein = wasserstein(approx, simulated);
  for (double eta : etas) {
    try {
      PercentileComparison p;
      p.approx = percentile(approx, eta);
      p.simulated = percentile(simulated, eta);
      p.error = p.approx - p.simulated;
      report.percentile_errors[eta] = p;
    } catch (const SaturationError& e) {
      spdlog::warn("R={} rho={} method {}: {}", report.servers, report.load,
                   to_string(method), e.what());
    }
  }
  return report;
}

void write_comparison_csv(std::ostream& out,
                          std::span<const ComparisonReport> reports,
                          bool header) {
  if (header) out << "R,rho,method,wasserstein,eta,approx_pct,sim_pct,error\n";
  for (const auto& r : reports) {
    const auto prefix = fmt::format("{},{:.6g},{},{:.12g}", r.servers, r.load,
                                    to_string(r.method), r.wasserstein);
    if (r.percentile_errors.empty()) {
      out << prefix << ",,,,\n";
      continue;
    }
    for (const auto& [eta, p] : r.percentile_errors) {
      out << fmt::format("{},{:.12g},{:.12g},{:.12g},{:.12g}\n", prefix, eta,
                         p.approx, p.simulated, p.error);
    }
  }
}

std::optional<MethodId> pick_winner(const std::map<MethodId, double>& distances,
                                    const SystemConfig& config) {
  if (distances.empty()) return std::nullopt;
  double best = distances.begin()->second;
  for (const auto& [method, w] : distances) best = std::min(best, w);
  const MethodId preferred = best_method(config);
  const auto found = distances.find(preferred);
  if (found != distances.end() && found->second <= best + kScanTieTolerance) {
    return preferred;
  }
  for (const auto& [method, w] : distances) {
    if (w <= best + kScanTieTolerance) return method;
  }
  return std::nullopt;
}

RegimeMap RegimeScan::to_map() const {
  std::map<int, std::vector<const ScanCellResult*>> by_servers;
  for (const auto& cell : cells) {
    if (cell.winner) by_servers[cell.servers].push_back(&cell);
  }
  std::vector<RegimeMap::Row> rows;
  for (auto& [servers, list] : by_servers) {
    std::sort(list.begin(), list.end(),
              [](auto* a, auto* b) { return a->load < b->load; });
    for (std::size_t k = 0; k < list.size(); ++k) {
      const double low = k == 0 ? 0.0 : 0.5 * (list[k - 1]->load + list[k]->load);
      const double high =
          k + 1 == list.size() ? 1.0 : 0.5 * (list[k]->load + list[k + 1]->load);
      rows.push_back({servers, low, high, *list[k]->winner});
    }
  }
  const RegimeMap fallback = RegimeMap::defaults();
  for (const auto& row : fallback.rows()) {
    if (!by_servers.contains(row.servers)) rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.servers < b.servers;
  });
  return RegimeMap(std::move(rows));
}

SojournCdf simulate_baseline(const SystemConfig& config,
                             const SimulationBudget& budget,
                             const TimeGrid& grid) {
  SimulationConfig sim(config);
  sim.q_max = budget.q_max;
  sim.q_warmup = budget.q_warmup;
  sim.trials = budget.trials;
  sim.seed = budget.seed;
  const auto result = run_simulation(sim);
  const auto samples = result.samples();
  return aggregate_trials(samples, grid);
}

RegimeScan regime_scan(std::span<const ScanCell> cells,
                       std::span<const MethodId> methods,
                       const SimulationBudget& budget, const TimeGrid& grid,
                       const BaselineProvider& baseline) {
  if (methods.empty()) throw ParameterError("regime scan needs at least one method");
  RegimeScan scan;
  for (const auto& cell : cells) {
    const SystemConfig config = SystemConfig::from_load(cell.servers, cell.load);
    config.require_stable();
    const SojournCdf reference =
        baseline ? baseline(config) : simulate_baseline(config, budget, grid);
    SojournModel model(config, default_hyperparameters(cell.servers), grid);
    ScanCellResult result;
    result.servers = cell.servers;
    result.load = cell.load;
    for (MethodId method : methods) {
      try {
        result.distances[method] = wasserstein(model.cdf(method), reference);
      } catch (const NumericalError& e) {
        spdlog::warn("R={} rho={} method {} skipped: {}", cell.servers,
                     cell.load, to_string(method), e.what());
      }
    }
    result.winner = pick_winner(result.distances, config);
    scan.cells.push_back(std::move(result));
  }
  return scan;
}

}  // namespace jsqps
