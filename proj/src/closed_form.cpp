#include "jsqps/closed_form.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace jsqps {

namespace {

double checked_ratio(double numerator, double denominator, const char* name,
                     double load) {
  if (std::abs(denominator) < 1e-12) {
    throw NumericalError(fmt::format(
        "coefficient {} is singular at rho={} (denominator {:.3g})", name, load,
        denominator));
  }
  return numerator / denominator;
}

double clamp_rate(double rate, int n, double load) {
  if (!std::isfinite(rate)) {
    throw NumericalError(
        fmt::format("fitted lambda_{} is not finite at rho={}", n, load));
  }
  if (rate < 0.0) {
    spdlog::warn("fitted lambda_{} = {:.6g} < 0 at rho={}; clamped to 0", n,
                 rate, load);
    return 0.0;
  }
  return rate;
}

}  // namespace

LoadCoefficients load_coefficients(double r) {
  LoadCoefficients k{};
  k.a = checked_ratio(r, 1.0 - r, "k_a", r);
  k.b = checked_ratio(-0.0263 * r * r + 0.0054 * r + 0.1155,
                      r * r - 1.939 * r + 0.9534, "k_b", r);
  k.c = -6.2973 * std::pow(r, 4) + 14.3382 * std::pow(r, 3) -
        12.3532 * r * r + 6.2557 * r - 1.005;
  k.d = checked_ratio(-226.1839 * r * r + 342.3814 * r + 10.2851,
                      std::pow(r, 3) - 146.2751 * r * r - 481.1256 * r + 599.9166,
                      "k_d", r);
  k.e = 0.4462 * std::pow(r, 3) - 1.8317 * r * r + 2.4376 * r - 0.0512;
  k.f = -0.29 * std::pow(r, 3) + 0.8822 * r * r - 0.5349 * r + 1.0112;
  k.g = -0.1864 * r * r + 1.195 * r - 0.016;
  return k;
}

double tail_arrival_rate(const SystemConfig& config, int n) {
  const double mu = config.service_rate();
  return mu * std::pow(config.arrival_rate() / (n * mu), n);
}

ArrivalRateProfile lambda_n_closed_form(const SystemConfig& config,
                                        int system_limit) {
  config.require_stable();
  if (system_limit < 3) {
    throw ParameterError(
        fmt::format("L2 must be >= 3 for the fitted profile, got {}",
                    system_limit));
  }
  const double rho = config.load();
  const double mu = config.service_rate();
  const int servers = config.servers();
  const LoadCoefficients k = load_coefficients(rho);

  // lambda_1 is built from the unclamped lambda_0 and lambda_2.
  const double lambda0 =
      mu * (k.a - k.b * std::pow(k.c, servers) - k.d * std::pow(k.e, servers));
  const double lambda2 = mu * k.f * std::pow(k.g, servers);
  const double rho_r = std::pow(rho, servers);
  const double inner = checked_ratio(mu * (rho - rho * rho_r),
                                     lambda0 * (1.0 - rho), "lambda_1 (lambda_0)",
                                     rho);
  const double lambda1 = checked_ratio(mu * (rho_r - 1.0 + inner),
                                       lambda2 / mu - rho_r + 1.0, "lambda_1", rho);

  ArrivalRateProfile profile;
  profile.source = ProfileSource::ClosedForm;
  profile.rates.resize(static_cast<std::size_t>(system_limit));
  profile.rates[0] = clamp_rate(lambda0, 0, rho);
  profile.rates[1] = clamp_rate(lambda1, 1, rho);
  profile.rates[2] = clamp_rate(lambda2, 2, rho);
  for (int n = 3; n < system_limit; ++n) {
    profile.rates[static_cast<std::size_t>(n)] = tail_arrival_rate(config, n);
  }
  return profile;
}

JoinProbabilities join_probabilities_birth_death(
    const ArrivalRateProfile& lambda, double service_rate, int system_limit) {
  if (!(service_rate > 0.0)) {
    throw ParameterError("service rate must be positive");
  }
  if (system_limit < 1 ||
      lambda.size() < static_cast<std::size_t>(system_limit) - 1) {
    throw ParameterError(fmt::format(
        "birth-death join probabilities need {} arrival rates, got {}",
        system_limit - 1, lambda.size()));
  }
  const auto states = static_cast<std::size_t>(system_limit);
  const double log_mu = std::log(service_rate);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  // log of prod_{i<n} lambda_i / mu
  std::vector<double> log_weight(states, 0.0);
  for (std::size_t n = 1; n < states; ++n) {
    const double rate = lambda[n - 1];
    if (std::isnan(rate) || rate < 0.0) {
      throw NumericalError(
          fmt::format("lambda_{} = {} is not a valid rate", n - 1, rate));
    }
    log_weight[n] = rate == 0.0 || log_weight[n - 1] == kNegInf
                        ? kNegInf
                        : log_weight[n - 1] + std::log(rate) - log_mu;
  }
  const double peak = *std::max_element(log_weight.begin(), log_weight.end());
  double total = 0.0;
  for (double lw : log_weight) total += std::exp(lw - peak);

  JoinProbabilities out;
  out.source = JoinSource::BirthDeath;
  out.probs.resize(states);
  for (std::size_t n = 0; n < states; ++n) {
    out.probs[n] = std::exp(log_weight[n] - peak) / total;
  }
  return out;
}

}  // namespace jsqps
