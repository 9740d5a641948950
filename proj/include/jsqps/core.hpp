#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "jsqps/errors.hpp"

namespace jsqps {

/// R parallel processor-sharing servers fed by a Poisson stream of rate
/// Lambda, each customer asking for an exponential amount of work of mean
/// 1/mu.
class SystemConfig {
 public:
  SystemConfig(int servers, double arrival_rate, double service_rate);

  int servers() const noexcept { return servers_; }
  double arrival_rate() const noexcept { return arrival_rate_; }
  double service_rate() const noexcept { return service_rate_; }

  /// rho = Lambda / (R mu)
  double load() const noexcept {
    return arrival_rate_ / (servers_ * service_rate_);
  }
  bool stable() const noexcept { return load() < 1.0; }

  /// Throws ParameterError unless 0 < rho < 1.
  void require_stable() const;

  /// Convenience constructor from (R, rho, mu).
  static SystemConfig from_load(int servers, double load,
                                double service_rate = 1.0);

 private:
  int servers_;
  double arrival_rate_;
  double service_rate_;
};

inline constexpr double kDefaultTimeMax = 182.32;
inline constexpr double kDefaultTimeStep = 0.01;
inline constexpr std::size_t kMaxGridPoints = 10'000'001;

/// Uniform grid 0, dt, 2 dt, ..., floor(t_max/dt) dt.
class TimeGrid {
 public:
  TimeGrid() = default;

  std::size_t size() const noexcept { return count_; }
  double step() const noexcept { return step_; }
  double t_max() const noexcept { return t_max_; }
  double operator[](std::size_t i) const noexcept {
    return static_cast<double>(i) * step_;
  }
  double back() const noexcept { return (*this)[count_ - 1]; }
  std::vector<double> points() const;

  /// Same number of points and the same spacing.
  bool same_as(const TimeGrid& other) const noexcept;

 private:
  friend TimeGrid make_time_grid(double, double);
  TimeGrid(double t_max, double step, std::size_t count)
      : t_max_(t_max), step_(step), count_(count) {}

  double t_max_ = 0.0;
  double step_ = 0.0;
  std::size_t count_ = 0;
};

TimeGrid make_time_grid(double t_max = kDefaultTimeMax,
                        double step = kDefaultTimeStep);

inline constexpr double kMonotoneSlack = 1e-9;

/// P(T <= t_i) sampled on a uniform grid.
struct SojournCdf {
  TimeGrid grid;
  std::vector<double> values;
  std::string source;  // "A".."F" or "simulation"
};

/// Throws NumericalError when the CDF leaves [0, 1], decreases by more than
/// kMonotoneSlack, or is non-zero at the origin.
void validate_cdf(const SojournCdf& cdf);

/// Smallest grid point whose CDF value strictly exceeds eta.
double percentile(const SojournCdf& cdf, double eta);

SojournCdf empirical_cdf(std::span<const double> samples, const TimeGrid& grid);

/// Truncation limits of the analytical methods.
struct Hyperparameters {
  int chain_limit = 22;      // L1, per-server cap of the CTMC
  int system_limit = 130;    // L2, cut-off for infinite sums and matrices
  double tolerance = 1e-6;   // acceptable boundary mass for L1

  void validate() const;
};

inline constexpr int kDefaultSystemLimit = 130;

/// Per-server CTMC limit used for R servers (tabulated for R <= 10, and the
/// largest L1 with (L1+1)^{2R} < 1e11 beyond that).
int default_chain_limit(int servers);

Hyperparameters default_hyperparameters(int servers);

/// Throws ParameterError when (L1+1)^{2R} >= 1e11.
void check_chain_limit(int servers, int chain_limit);

enum class ProfileSource { MarkovChain, ClosedForm };
enum class JoinSource { MarkovChain, BirthDeath };

/// lambda_n: arrival rate seen by a server already holding n customers.
struct ArrivalRateProfile {
  std::vector<double> rates;
  ProfileSource source = ProfileSource::MarkovChain;

  std::size_t size() const noexcept { return rates.size(); }
  double operator[](std::size_t n) const { return rates[n]; }
};

/// A_n: probability that an arrival joins a server holding n customers.
struct JoinProbabilities {
  std::vector<double> probs;
  JoinSource source = JoinSource::MarkovChain;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t n) const { return probs[n]; }
};

}  // namespace jsqps
