#pragma once

#include "jsqps/core.hpp"

namespace jsqps {

/// Empirical rho-polynomials of the fitted lambda_0 / lambda_2 formulas.
struct LoadCoefficients {
  double a, b, c, d, e, f, g;
};

/// Evaluates k_a .. k_g at `load`. Throws NumericalError when a rational
/// coefficient's denominator is within 1e-12 of zero.
LoadCoefficients load_coefficients(double load);

/// mu (Lambda / (n mu))^n, the fitted arrival rate for a server holding n.
double tail_arrival_rate(const SystemConfig& config, int n);

/// Fitted lambda_0, lambda_2, then lambda_1 (which depends on lambda_2), and
/// the power-law tail for n >= 3. Negative fitted values are clamped to 0.
ArrivalRateProfile lambda_n_closed_form(const SystemConfig& config,
                                        int system_limit);

/// Stationary law of the single-server birth-death chain with birth rates
/// lambda_n and death rate mu, truncated to `system_limit` states and
/// renormalised. Products are accumulated in log space.
JoinProbabilities join_probabilities_birth_death(
    const ArrivalRateProfile& lambda, double service_rate, int system_limit);

}  // namespace jsqps
