#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jsqps/core.hpp"
#include "jsqps/markov_chain.hpp"

namespace jsqps {

/// Tridiagonal defective generator of the tagged customer's sojourn in a
/// state-dependent M/M/1-PS queue. Row n (n other customers present):
/// sub = n/(n+1) mu, diag = -(lambda_n + mu), super = lambda_n; the last
/// row's super-diagonal is dropped.
struct DefectiveGenerator {
  std::vector<double> sub;    // sub[0] == 0
  std::vector<double> diag;
  std::vector<double> super;  // super.back() == 0

  std::size_t dimension() const noexcept { return diag.size(); }
};

DefectiveGenerator build_defective_generator(const ArrivalRateProfile& lambda,
                                             double service_rate,
                                             int system_limit);

/// w_n(t_i) = P(T > t_i | n present at arrival), stored row-major by n.
class ConditionalTailMatrix {
 public:
  ConditionalTailMatrix(TimeGrid grid, std::size_t states);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t states() const noexcept { return states_; }

  double operator()(std::size_t n, std::size_t i) const {
    return data_[n * grid_.size() + i];
  }
  double& operator()(std::size_t n, std::size_t i) {
    return data_[n * grid_.size() + i];
  }
  std::span<const double> row(std::size_t n) const {
    return {data_.data() + n * grid_.size(), grid_.size()};
  }

 private:
  TimeGrid grid_;
  std::size_t states_;
  std::vector<double> data_;
};

/// exp(D dt) by scaling-and-squaring Pade, then w(t_{i+1}) = exp(D dt) w(t_i).
ConditionalTailMatrix w_matrix_exponential(const DefectiveGenerator& d,
                                           const TimeGrid& grid);

/// Uniformisation of the same semigroup with theta = max_n lambda_n + mu:
/// w(t) = sum_i Poisson(theta t; i) h_i, h_{i+1} = (I + D/theta) h_i,
/// h_0 = 1. The series runs until the Poisson tail drops below 1e-12 (and
/// never fewer than L2 terms).
ConditionalTailMatrix w_uniformization(const ArrivalRateProfile& lambda,
                                       double service_rate,
                                       const TimeGrid& grid, int system_limit);

/// P(T <= t_i) = 1 - sum_n A_n w_n(t_i).
SojournCdf assemble_w(const JoinProbabilities& join,
                      const ConditionalTailMatrix& tails,
                      std::string source = {});

enum class MethodId { A, B, C, D, E, F };

inline constexpr std::array<MethodId, 6> kAllMethods = {
    MethodId::A, MethodId::B, MethodId::C, MethodId::D, MethodId::E, MethodId::F};

enum class TailSolver { MatrixExponential, Uniformization };

struct MethodRecipe {
  ProfileSource lambda;
  JoinSource join;
  TailSolver tail;
};

MethodRecipe recipe(MethodId method);
std::string_view to_string(MethodId method);
/// Accepts "A".."F" (case-insensitive); nullopt otherwise.
std::optional<MethodId> parse_method(std::string_view text);

/// Evaluates the six methods for one system, sharing the CTMC solve,
/// profiles and tail matrices between them.
class SojournModel {
 public:
  SojournModel(SystemConfig config, Hyperparameters hyper, TimeGrid grid);

  const SystemConfig& config() const noexcept { return config_; }
  const Hyperparameters& hyper() const noexcept { return hyper_; }
  const TimeGrid& grid() const noexcept { return grid_; }

  const ChainSolution& chain();
  const ArrivalRateProfile& arrival_rates(ProfileSource source);
  const JoinProbabilities& join_probabilities(ProfileSource lambda_source,
                                              JoinSource join_source);
  const ConditionalTailMatrix& tails(ProfileSource source, TailSolver solver);

  SojournCdf cdf(MethodId method);

 private:
  static constexpr std::size_t index(ProfileSource s) {
    return static_cast<std::size_t>(s);
  }

  SystemConfig config_;
  Hyperparameters hyper_;
  TimeGrid grid_;
  std::optional<ChainSolution> chain_;
  std::array<std::optional<ArrivalRateProfile>, 2> rates_;
  std::optional<JoinProbabilities> join_mc_;
  std::array<std::optional<JoinProbabilities>, 2> join_bd_;
  std::array<std::array<std::optional<ConditionalTailMatrix>, 2>, 2> tails_;
};

SojournCdf compute_method(MethodId method, const SystemConfig& config,
                          const Hyperparameters& hyper, const TimeGrid& grid);

/// (R, rho) -> method lookup table. Rows are half-open intervals
/// [rho_low, rho_high) for one R.
class RegimeMap {
 public:
  struct Row {
    int servers;
    double rho_low;
    double rho_high;
    MethodId method;
  };

  RegimeMap() = default;
  explicit RegimeMap(std::vector<Row> rows);

  /// D below rho = 0.6, C up to 0.97, E above, for R = 2..10; a single
  /// server uses D up to 0.97 and E above.
  static RegimeMap defaults();

  /// Parses "R rho_low rho_high method" rows ('#' starts a comment) and
  /// checks coverage of every R in 1..10 at every rho decile.
  static RegimeMap parse(std::istream& in);
  static RegimeMap load(const std::string& path);

  void write(std::ostream& out) const;
  std::optional<MethodId> find(int servers, double load) const;
  const std::vector<Row>& rows() const noexcept { return rows_; }

  /// Throws ParameterError naming the first uncovered (R, rho) decile.
  void require_total() const;

 private:
  std::vector<Row> rows_;
};

/// Default rule: depends on rho only, except that R = 1 never uses C.
MethodId best_method(const SystemConfig& config);
/// Looks `config` up in `map`, falling back to the default rule.
MethodId best_method(const SystemConfig& config, const RegimeMap& map);

}  // namespace jsqps
