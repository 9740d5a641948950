#include "jsqps/sojourn_cdf.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <fmt/format.h>

#include "jsqps/closed_form.hpp"

namespace jsqps {

namespace {

constexpr double kTailSlack = 1e-9;
constexpr double kRepairLimit = 1e-6;
constexpr double kHistorySlack = 1e-6;
constexpr double kPoissonTail = 1e-12;
constexpr double kNegligibleWeight = 1e-18;

double clamp_probability(double v, const char* what, std::size_t n,
                         double t) {
  if (v < -kTailSlack || v > 1.0 + kTailSlack || std::isnan(v)) {
    throw NumericalError(
        fmt::format("{}: w_{}({}) = {:.12g} is outside [0,1]", what, n, t, v));
  }
  return std::clamp(v, 0.0, 1.0);
}

void require_profile(const ArrivalRateProfile& lambda, int system_limit) {
  if (system_limit < 1) {
    throw ParameterError(fmt::format("L2 must be >= 1, got {}", system_limit));
  }
  if (lambda.size() < static_cast<std::size_t>(system_limit)) {
    throw ParameterError(fmt::format("arrival profile has {} rates, L2 = {}",
                                     lambda.size(), system_limit));
  }
  for (std::size_t n = 0; n < static_cast<std::size_t>(system_limit); ++n) {
    if (!(lambda[n] >= 0.0) || !std::isfinite(lambda[n])) {
      throw ParameterError(
          fmt::format("lambda_{} = {} is not a valid rate", n, lambda[n]));
    }
  }
}

}  // namespace

DefectiveGenerator build_defective_generator(const ArrivalRateProfile& lambda,
                                             double service_rate,
                                             int system_limit) {
  require_profile(lambda, system_limit);
  const auto size = static_cast<std::size_t>(system_limit);
  DefectiveGenerator d;
  d.sub.resize(size);
  d.diag.resize(size);
  d.super.resize(size);
  for (std::size_t n = 0; n < size; ++n) {
    const double others = static_cast<double>(n);
    d.sub[n] = others / (others + 1.0) * service_rate;
    d.diag[n] = -(lambda[n] + service_rate);
    d.super[n] = n + 1 < size ? lambda[n] : 0.0;
  }
  return d;
}

ConditionalTailMatrix::ConditionalTailMatrix(TimeGrid grid, std::size_t states)
    : grid_(grid), states_(states), data_(states * grid.size(), 0.0) {}

ConditionalTailMatrix w_matrix_exponential(const DefectiveGenerator& d,
                                           const TimeGrid& grid) {
  const auto n = static_cast<Eigen::Index>(d.dimension());
  Eigen::MatrixXd generator = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto u = static_cast<std::size_t>(k);
    generator(k, k) = d.diag[u];
    if (k > 0) generator(k, k - 1) = d.sub[u];
    if (k + 1 < n) generator(k, k + 1) = d.super[u];
  }
  const Eigen::MatrixXd propagator = (generator * grid.step()).exp();
  if (!propagator.allFinite()) {
    throw NumericalError("Pade matrix exponential returned non-finite entries");
  }

  ConditionalTailMatrix w(grid, d.dimension());
  Eigen::VectorXd current = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd next(n);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto u = static_cast<std::size_t>(k);
      w(u, i) = clamp_probability(current(k), "matrix exponential", u, grid[i]);
    }
    next.noalias() = propagator * current;
    current.swap(next);
  }
  return w;
}

ConditionalTailMatrix w_uniformization(const ArrivalRateProfile& lambda,
                                       double service_rate,
                                       const TimeGrid& grid, int system_limit) {
  if (!(service_rate > 0.0)) {
    throw ParameterError("service rate must be positive");
  }
  const DefectiveGenerator d =
      build_defective_generator(lambda, service_rate, system_limit);
  const std::size_t states = d.dimension();
  const double theta =
      *std::max_element(lambda.rates.begin(),
                        lambda.rates.begin() + static_cast<long>(states)) +
      service_rate;

  // Terms needed so that the Poisson tail at the last grid point is < 1e-12.
  const double horizon = theta * grid.back();
  std::size_t terms = static_cast<std::size_t>(system_limit);
  if (horizon > 0.0) {
    const double log_rate = std::log(horizon);
    double log_weight = -horizon;
    double cumulative = 0.0;
    std::size_t i = 0;
    for (;; ++i) {
      cumulative += std::exp(log_weight);
      if (static_cast<double>(i) > horizon && 1.0 - cumulative < kPoissonTail) {
        break;
      }
      log_weight += log_rate - std::log(static_cast<double>(i + 1));
    }
    terms = std::max(terms, i + 1);
  }

  // h_i = (I + D/theta)^i 1, stored with n contiguous.
  std::vector<double> h(terms * states);
  std::fill(h.begin(), h.begin() + static_cast<long>(states), 1.0);
  for (std::size_t i = 0; i + 1 < terms; ++i) {
    const double* prev = h.data() + i * states;
    double* next = h.data() + (i + 1) * states;
    for (std::size_t n = 0; n < states; ++n) {
      double v = prev[n] * (1.0 + d.diag[n] / theta);
      if (n > 0) v += d.sub[n] / theta * prev[n - 1];
      if (n + 1 < states) v += d.super[n] / theta * prev[n + 1];
      if (v < -kHistorySlack || v > 1.0 + kHistorySlack || std::isnan(v)) {
        throw NumericalError(fmt::format(
            "uniformisation h[{}][{}] = {:.6g} left [0,1]; theta={} does not "
            "dominate the exit rates",
            n, i + 1, v, theta));
      }
      next[n] = v;
    }
  }

  ConditionalTailMatrix w(grid, states);
  std::vector<double> acc(states);
  std::vector<double> weights;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    const double rate = theta * grid[t];
    if (rate == 0.0) {
      for (std::size_t n = 0; n < states; ++n) w(n, t) = 1.0;
      continue;
    }
    // Poisson weights by log-space recurrence outwards from the mode.
    const double log_rate = std::log(rate);
    const auto mode = std::min(static_cast<std::size_t>(rate), terms - 1);
    const double log_mode = -rate + static_cast<double>(mode) * log_rate -
                            std::lgamma(static_cast<double>(mode) + 1.0);
    std::size_t low = mode;
    double lw = log_mode;
    while (low > 0) {
      lw += std::log(static_cast<double>(low)) - log_rate;
      if (std::exp(lw) < kNegligibleWeight) break;
      --low;
    }
    std::size_t high = mode;
    lw = log_mode;
    while (high + 1 < terms) {
      lw += log_rate - std::log(static_cast<double>(high + 1));
      if (std::exp(lw) < kNegligibleWeight) break;
      ++high;
    }
    weights.assign(high - low + 1, 0.0);
    lw = log_mode;
    weights[mode - low] = std::exp(lw);
    for (std::size_t i = mode; i > low; --i) {
      lw += std::log(static_cast<double>(i)) - log_rate;
      weights[i - 1 - low] = std::exp(lw);
    }
    lw = log_mode;
    for (std::size_t i = mode; i < high; ++i) {
      lw += log_rate - std::log(static_cast<double>(i + 1));
      weights[i + 1 - low] = std::exp(lw);
    }

    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = low; i <= high; ++i) {
      const double weight = weights[i - low];
      const double* hi = h.data() + i * states;
      for (std::size_t n = 0; n < states; ++n) acc[n] += weight * hi[n];
    }
    for (std::size_t n = 0; n < states; ++n) {
      w(n, t) = clamp_probability(acc[n], "uniformisation", n, grid[t]);
    }
  }
  return w;
}

SojournCdf assemble_w(const JoinProbabilities& join,
                      const ConditionalTailMatrix& tails, std::string source) {
  if (join.size() != tails.states()) {
    throw ParameterError(
        fmt::format("join probabilities have {} entries, tail matrix {} rows",
                    join.size(), tails.states()));
  }
  const TimeGrid& grid = tails.grid();
  std::vector<double> survival(grid.size(), 0.0);
  for (std::size_t n = 0; n < join.size(); ++n) {
    const double a = join[n];
    if (a == 0.0) continue;
    const auto row = tails.row(n);
    for (std::size_t i = 0; i < grid.size(); ++i) survival[i] += a * row[i];
  }

  SojournCdf cdf{grid, std::vector<double>(grid.size()), std::move(source)};
  double running = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double v = 1.0 - survival[i];
    if (std::abs(v) < kTailSlack) v = 0.0;
    v = std::clamp(v, 0.0, 1.0);
    if (v < running) {
      if (running - v > kRepairLimit) {
        throw NumericalError(fmt::format(
            "CDF '{}' loses monotonicity at index {} (t={}): {:.12g} after "
            "{:.12g}",
            cdf.source, i, grid[i], v, running));
      }
      v = running;
    }
    running = v;
    cdf.values[i] = v;
  }
  return cdf;
}

MethodRecipe recipe(MethodId method) {
  using enum ProfileSource;
  switch (method) {
    case MethodId::A: return {MarkovChain, JoinSource::MarkovChain, TailSolver::MatrixExponential};
    case MethodId::B: return {MarkovChain, JoinSource::BirthDeath, TailSolver::MatrixExponential};
    case MethodId::C: return {ClosedForm, JoinSource::BirthDeath, TailSolver::MatrixExponential};
    case MethodId::D: return {MarkovChain, JoinSource::MarkovChain, TailSolver::Uniformization};
    case MethodId::E: return {MarkovChain, JoinSource::BirthDeath, TailSolver::Uniformization};
    case MethodId::F: return {ClosedForm, JoinSource::BirthDeath, TailSolver::Uniformization};
  }
  throw InternalError("unknown method id");
}

std::string_view to_string(MethodId method) {
  static constexpr std::array<std::string_view, 6> kNames = {"A", "B", "C",
                                                             "D", "E", "F"};
  return kNames[static_cast<std::size_t>(method)];
}

std::optional<MethodId> parse_method(std::string_view text) {
  if (text.size() != 1) return std::nullopt;
  const char c = static_cast<char>(
      std::toupper(static_cast<unsigned char>(text.front())));
  if (c < 'A' || c > 'F') return std::nullopt;
  return static_cast<MethodId>(c - 'A');
}

SojournModel::SojournModel(SystemConfig config, Hyperparameters hyper,
                           TimeGrid grid)
    : config_(config), hyper_(hyper), grid_(grid) {
  config_.require_stable();
  hyper_.validate();
}

const ChainSolution& SojournModel::chain() {
  if (!chain_) chain_ = solve_jsq_chain(config_, hyper_.chain_limit);
  return *chain_;
}

const ArrivalRateProfile& SojournModel::arrival_rates(ProfileSource source) {
  auto& slot = rates_[index(source)];
  if (!slot) {
    slot = source == ProfileSource::MarkovChain
               ? lambda_n_mc(config_, chain(), hyper_.system_limit)
               : lambda_n_closed_form(config_, hyper_.system_limit);
  }
  return *slot;
}

const JoinProbabilities& SojournModel::join_probabilities(
    ProfileSource lambda_source, JoinSource join_source) {
  if (join_source == JoinSource::MarkovChain) {
    if (lambda_source != ProfileSource::MarkovChain) {
      throw ParameterError(
          "CTMC join probabilities come with the CTMC arrival profile only");
    }
    if (!join_mc_) {
      join_mc_ = join_probabilities_mc(chain().steady_state, chain().states,
                                       hyper_.system_limit);
    }
    return *join_mc_;
  }
  auto& slot = join_bd_[index(lambda_source)];
  if (!slot) {
    slot = join_probabilities_birth_death(arrival_rates(lambda_source),
                                          config_.service_rate(),
                                          hyper_.system_limit);
  }
  return *slot;
}

const ConditionalTailMatrix& SojournModel::tails(ProfileSource source,
                                                 TailSolver solver) {
  auto& slot = tails_[index(source)][static_cast<std::size_t>(solver)];
  if (!slot) {
    const auto& lambda = arrival_rates(source);
    slot = solver == TailSolver::MatrixExponential
               ? w_matrix_exponential(
                     build_defective_generator(lambda, config_.service_rate(),
                                               hyper_.system_limit),
                     grid_)
               : w_uniformization(lambda, config_.service_rate(), grid_,
                                  hyper_.system_limit);
  }
  return *slot;
}

SojournCdf SojournModel::cdf(MethodId method) {
  const MethodRecipe r = recipe(method);
  return assemble_w(join_probabilities(r.lambda, r.join), tails(r.lambda, r.tail),
                    std::string(to_string(method)));
}

SojournCdf compute_method(MethodId method, const SystemConfig& config,
                          const Hyperparameters& hyper, const TimeGrid& grid) {
  SojournModel model(config, hyper, grid);
  return model.cdf(method);
}

}  // namespace jsqps
