#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "jsqps/core.hpp"
#include "jsqps/sojourn_cdf.hpp"

namespace jsqps {

/// Left-endpoint Riemann sum of |G - H| over the shared grid.
double wasserstein(const SojournCdf& g, const SojournCdf& h);

/// percentile(approx, eta) - percentile(simulated, eta); positive means the
/// approximation overestimates.
double percentile_error(const SojournCdf& approx, const SojournCdf& simulated,
                        double eta);

inline constexpr std::array<double, 4> kUrllcLevels = {0.99, 0.999, 0.9999,
                                                       0.99999};

struct PercentileComparison {
  double approx = 0.0;
  double simulated = 0.0;
  double error = 0.0;  // approx - simulated
};

struct ComparisonReport {
  MethodId method = MethodId::A;
  int servers = 1;
  double load = 0.0;
  double wasserstein = 0.0;
  std::map<double, PercentileComparison> percentile_errors;
};

/// Saturated percentiles are skipped (they remain absent from the map).
ComparisonReport compare(MethodId method, const SystemConfig& config,
                         const SojournCdf& approx, const SojournCdf& simulated,
                         std::span<const double> etas);

/// Header "R,rho,method,wasserstein,eta,approx_pct,sim_pct,error"; one row
/// per eta (a row with empty percentile fields when none were computed).
void write_comparison_csv(std::ostream& out,
                          std::span<const ComparisonReport> reports,
                          bool header = true);

/// Baseline simulation settings for scans.
struct SimulationBudget {
  double q_max = 40000.0;
  double q_warmup = 2000.0;
  int trials = 4;
  std::uint64_t seed = 0;
};

struct ScanCell {
  int servers;
  double load;
};

struct ScanCellResult {
  int servers = 1;
  double load = 0.0;
  std::map<MethodId, double> distances;  // methods that failed are absent
  std::optional<MethodId> winner;
};

/// Methods whose distances differ by less than this are treated as tied.
inline constexpr double kScanTieTolerance = 1e-3;

/// Smallest distance wins; among ties the default-map method is preferred,
/// then alphabetical order.
std::optional<MethodId> pick_winner(const std::map<MethodId, double>& distances,
                                    const SystemConfig& config);

struct RegimeScan {
  std::vector<ScanCellResult> cells;

  /// Regime-map rows for the scanned R values (each R's cells split at the
  /// midpoints between scanned loads, outermost cells stretched to 0 and 1);
  /// R in 1..10 that were not scanned keep their default rows.
  RegimeMap to_map() const;
};

/// Simulation CDF on `grid` for one cell; used as the scan baseline.
SojournCdf simulate_baseline(const SystemConfig& config,
                             const SimulationBudget& budget,
                             const TimeGrid& grid);

using BaselineProvider = std::function<SojournCdf(const SystemConfig&)>;

RegimeScan regime_scan(std::span<const ScanCell> cells,
                       std::span<const MethodId> methods,
                       const SimulationBudget& budget, const TimeGrid& grid,
                       const BaselineProvider& baseline = {});

}  // namespace jsqps
