#include "jsqps/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>

namespace jsqps {

SystemConfig::SystemConfig(int servers, double arrival_rate,
                           double service_rate)
    : servers_(servers),
      arrival_rate_(arrival_rate),
      service_rate_(service_rate) {
  if (servers < 1) {
    throw ParameterError(fmt::format("R must be >= 1, got {}", servers));
  }
  if (!(arrival_rate > 0.0) || !std::isfinite(arrival_rate)) {
    throw ParameterError(
        fmt::format("arrival rate must be positive, got {}", arrival_rate));
  }
  if (!(service_rate > 0.0) || !std::isfinite(service_rate)) {
    throw ParameterError(
        fmt::format("service rate must be positive, got {}", service_rate));
  }
}

void SystemConfig::require_stable() const {
  if (!stable()) {
    throw ParameterError(fmt::format(
        "unstable system: rho = {:.6g} (Lambda={}, R={}, mu={}) must be < 1",
        load(), arrival_rate_, servers_, service_rate_));
  }
}

SystemConfig SystemConfig::from_load(int servers, double load,
                                     double service_rate) {
  return SystemConfig(servers, load * servers * service_rate, service_rate);
}

std::vector<double> TimeGrid::points() const {
  std::vector<double> out(count_);
  for (std::size_t i = 0; i < count_; ++i) out[i] = (*this)[i];
  return out;
}

bool TimeGrid::same_as(const TimeGrid& other) const noexcept {
  return count_ == other.count_ && step_ == other.step_;
}

TimeGrid make_time_grid(double t_max, double step) {
  if (!(t_max > 0.0) || !(step > 0.0) || !std::isfinite(t_max) ||
      !std::isfinite(step)) {
    throw ParameterError(fmt::format(
        "time grid needs t_max > 0 and step > 0, got t_max={}, step={}",
        t_max, step));
  }
  const double ratio = t_max / step;
  if (ratio > 1e7) {
    throw ResourceError(fmt::format(
        "time grid of {:.3g} steps exceeds the 1e7 limit", ratio));
  }
  // 182.32 / 0.01 lands a hair below 18232 in binary floating point.
  const auto steps = static_cast<std::size_t>(std::floor(ratio + 1e-9));
  return TimeGrid(t_max, step, steps + 1);
}

void validate_cdf(const SojournCdf& cdf) {
  if (cdf.values.size() != cdf.grid.size()) {
    throw NumericalError(fmt::format("CDF '{}' has {} values on {} grid points",
                                     cdf.source, cdf.values.size(),
                                     cdf.grid.size()));
  }
  if (cdf.values.empty()) return;
  if (cdf.values.front() != 0.0) {
    throw NumericalError(fmt::format("CDF '{}' is {} at t=0", cdf.source,
                                     cdf.values.front()));
  }
  for (std::size_t i = 0; i < cdf.values.size(); ++i) {
    const double v = cdf.values[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw NumericalError(fmt::format("CDF '{}' value {} at t={} is outside [0,1]",
                                       cdf.source, v, cdf.grid[i]));
    }
    if (i > 0 && v < cdf.values[i - 1] - kMonotoneSlack) {
      throw NumericalError(fmt::format(
          "CDF '{}' decreases at t={} ({} -> {})", cdf.source, cdf.grid[i],
          cdf.values[i - 1], v));
    }
  }
}

double percentile(const SojournCdf& cdf, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) {
    throw ParameterError(
        fmt::format("percentile level must lie in (0,1), got {}", eta));
  }
  const auto it = std::find_if(cdf.values.begin(), cdf.values.end(),
                               [eta](double v) { return v > eta; });
  if (it == cdf.values.end()) {
    const double reached =
        cdf.values.empty()
            ? 0.0
            : *std::max_element(cdf.values.begin(), cdf.values.end());
    throw SaturationError(
        fmt::format("CDF '{}' never exceeds {} on [0, {}]; max attained {:.12g}",
                    cdf.source, eta, cdf.grid.size() == 0 ? 0.0 : cdf.grid.back(),
                    reached),
        reached);
  }
  return cdf.grid[static_cast<std::size_t>(it - cdf.values.begin())];
}

SojournCdf empirical_cdf(std::span<const double> samples, const TimeGrid& grid) {
  if (samples.empty()) {
    throw ParameterError("empirical CDF needs at least one sample");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < 0.0) {
    throw ParameterError("sojourn samples must be non-negative");
  }
  SojournCdf cdf{grid, std::vector<double>(grid.size()), "simulation"};
  const double total = static_cast<double>(sorted.size());
  auto it = sorted.begin();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    it = std::upper_bound(it, sorted.end(), t);
    cdf.values[i] = static_cast<double>(it - sorted.begin()) / total;
  }
  return cdf;
}

void Hyperparameters::validate() const {
  if (chain_limit < 2) {
    throw ParameterError(fmt::format("L1 must be >= 2, got {}", chain_limit));
  }
  if (system_limit < chain_limit) {
    throw ParameterError(fmt::format("L2 ({}) must be >= L1 ({})",
                                     system_limit, chain_limit));
  }
  if (!(tolerance > 0.0)) {
    throw ParameterError("truncation tolerance must be positive");
  }
}

namespace {

constexpr std::array<int, 10> kTabulatedChainLimit = {22, 22, 22, 13, 7,
                                                      5,  4,  3,  3,  2};
constexpr double kTransitionBudget = 10e10;

bool within_transition_budget(int servers, int chain_limit) {
  return 2.0 * servers * std::log(chain_limit + 1.0) <
         std::log(kTransitionBudget);
}

}  // namespace

int default_chain_limit(int servers) {
  if (servers < 1) {
    throw ParameterError(fmt::format("R must be >= 1, got {}", servers));
  }
  if (servers <= static_cast<int>(kTabulatedChainLimit.size())) {
    return kTabulatedChainLimit[static_cast<std::size_t>(servers - 1)];
  }
  int limit = 2;
  while (within_transition_budget(servers, limit + 1)) ++limit;
  return limit;
}

Hyperparameters default_hyperparameters(int servers) {
  Hyperparameters h;
  h.chain_limit = default_chain_limit(servers);
  h.system_limit = kDefaultSystemLimit;
  return h;
}

void check_chain_limit(int servers, int chain_limit) {
  if (!within_transition_budget(servers, chain_limit)) {
    throw ParameterError(fmt::format(
        "L1={} with R={} defines (L1+1)^(2R) >= 1e11 transitions", chain_limit,
        servers));
  }
}

}  // namespace jsqps
