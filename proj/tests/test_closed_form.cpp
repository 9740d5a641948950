#include <doctest.h>

#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "jsqps/closed_form.hpp"
#include "jsqps/markov_chain.hpp"

using namespace jsqps;

namespace {

struct QuietLog {
  QuietLog() { spdlog::set_level(spdlog::level::err); }
  ~QuietLog() { spdlog::set_level(spdlog::level::info); }
};

double kd_denominator(double r) {
  return r * r * r - 146.2751 * r * r - 481.1256 * r + 599.9166;
}

}  // namespace

TEST_CASE("load coefficients at rho = 0.5") {
  const auto k = load_coefficients(0.5);
  CHECK(k.a == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(k.b == doctest::Approx(0.47723386062419837).epsilon(1e-12));
  CHECK(k.c == doctest::Approx(0.43324375).epsilon(1e-12));
  CHECK(k.d == doctest::Approx(0.3868874154650355).epsilon(1e-12));
  CHECK(k.e == doctest::Approx(0.76545).epsilon(1e-12));
  CHECK(k.f == doctest::Approx(0.92805).epsilon(1e-12));
  CHECK(k.g == doctest::Approx(0.5349).epsilon(1e-12));
}

TEST_CASE("k_d is singular at the root of its denominator") {
  double lo = 0.9, hi = 0.99;
  REQUIRE(kd_denominator(lo) > 0.0);
  REQUIRE(kd_denominator(hi) < 0.0);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (kd_denominator(mid) > 0.0 ? lo : hi) = mid;
  }
  CHECK(lo == doctest::Approx(0.96541277).epsilon(1e-8));
  CHECK_THROWS_AS(load_coefficients(lo), NumericalError);
  CHECK_NOTHROW(load_coefficients(0.95));
}

TEST_CASE("power-law tail") {
  const SystemConfig c(3, 2.0, 1.0);
  CHECK(tail_arrival_rate(c, 4) == doctest::Approx(0.0625));
  CHECK(tail_arrival_rate(c, 1) == doctest::Approx(2.0));
  const auto profile = lambda_n_closed_form(c, 10);
  CHECK(profile.source == ProfileSource::ClosedForm);
  REQUIRE(profile.size() == 10);
  CHECK(profile[4] == doctest::Approx(0.0625));
}

TEST_CASE("fitted rates at R = 2, rho = 0.5") {
  const auto config = SystemConfig::from_load(2, 0.5);
  const auto fitted = lambda_n_closed_form(config, 130);
  CHECK(fitted[0] == doctest::Approx(0.6837404962026981).epsilon(1e-12));
  CHECK(fitted[1] == doctest::Approx(0.3416016897496729).epsilon(1e-12));
  CHECK(fitted[2] == doctest::Approx(0.2655318191805).epsilon(1e-12));

  // Independent evaluation from the coefficients.
  const auto k = load_coefficients(0.5);
  const double l0 = k.a - k.b * k.c * k.c - k.d * k.e * k.e;
  const double l2 = k.f * k.g * k.g;
  const double l1 = (0.25 - 1.0 + (0.5 - 0.125) / (l0 * 0.5)) / (l2 - 0.25 + 1.0);
  CHECK(fitted[0] == doctest::Approx(l0).epsilon(1e-12));
  CHECK(fitted[1] == doctest::Approx(l1).epsilon(1e-12));
  CHECK(fitted[2] == doctest::Approx(l2).epsilon(1e-12));

  const auto mc = lambda_n_mc(config, default_hyperparameters(2));
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(std::abs(fitted[n] - mc[n]) < 0.15 * mc[n]);
  }
}

TEST_CASE("fitted profile errors and clamping") {
  QuietLog quiet;
  CHECK_THROWS_AS(lambda_n_closed_form(SystemConfig(2, 2.5, 1.0), 130),
                  ParameterError);
  CHECK_THROWS_AS(lambda_n_closed_form(SystemConfig::from_load(2, 0.5), 2),
                  ParameterError);

  const auto low = lambda_n_closed_form(SystemConfig::from_load(1, 0.1), 130);
  CHECK(low[1] == 0.0);
  CHECK(low[0] > 0.0);

  // lambda_0 goes negative here; lambda_1 still comes from the raw value.
  const auto tiny = lambda_n_closed_form(SystemConfig::from_load(2, 0.03), 130);
  CHECK(tiny[0] == 0.0);
  for (double v : tiny.rates) CHECK(v >= 0.0);
}

TEST_CASE("fitted rates are continuous in rho") {
  for (int r = 1; r <= 5; ++r) {
    for (double rho = 0.3; rho < 0.9; rho += 0.05) {
      const auto a = lambda_n_closed_form(SystemConfig::from_load(r, rho), 5);
      const auto b = lambda_n_closed_form(SystemConfig::from_load(r, rho + 1e-7), 5);
      for (std::size_t n = 0; n < 5; ++n) {
        CHECK(std::abs(a[n] - b[n]) < 1e-4);
      }
    }
  }
}

TEST_CASE("birth-death join probabilities") {
  SUBCASE("constant rates give a truncated geometric law") {
    ArrivalRateProfile lambda{std::vector<double>(20, 0.5), ProfileSource::MarkovChain};
    const auto join = join_probabilities_birth_death(lambda, 1.0, 20);
    CHECK(join.source == JoinSource::BirthDeath);
    const double norm = (1.0 - std::pow(0.5, 20)) / 0.5;
    for (std::size_t n = 0; n < 20; ++n) {
      CHECK(join[n] == doctest::Approx(std::pow(0.5, n) / norm).epsilon(1e-12));
    }
  }
  SUBCASE("two states") {
    ArrivalRateProfile lambda{{1.0}, ProfileSource::MarkovChain};
    const auto join = join_probabilities_birth_death(lambda, 1.0, 2);
    CHECK(join[0] == doctest::Approx(0.5));
    CHECK(join[1] == doctest::Approx(0.5));
  }
  SUBCASE("log-space products match direct products") {
    const auto lambda = lambda_n_closed_form(SystemConfig::from_load(3, 0.7), 40);
    const auto join = join_probabilities_birth_death(lambda, 1.0, 40);
    std::vector<double> direct(40, 1.0);
    for (std::size_t n = 1; n < 40; ++n) direct[n] = direct[n - 1] * lambda[n - 1];
    const double total = std::accumulate(direct.begin(), direct.end(), 0.0);
    for (std::size_t n = 0; n < 40; ++n) {
      CHECK(join[n] == doctest::Approx(direct[n] / total).epsilon(1e-10));
    }
  }
  SUBCASE("sums to one and matches the CTMC law for one server") {
    const auto config = SystemConfig::from_load(1, 0.5);
    const auto hyper = default_hyperparameters(1);
    const auto chain = solve_jsq_chain(config, hyper.chain_limit);
    const auto lambda = lambda_n_mc(config, chain, 130);
    const auto bd = join_probabilities_birth_death(lambda, 1.0, 130);
    const auto mc = join_probabilities_mc(chain.steady_state, chain.states, 130);
    CHECK(std::accumulate(bd.probs.begin(), bd.probs.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
    double l1 = 0.0;
    for (std::size_t n = 0; n < 130; ++n) l1 += std::abs(bd[n] - mc[n]);
    CHECK(l1 < 1e-5);
  }
  SUBCASE("zero rate cuts the chain") {
    ArrivalRateProfile lambda{{0.5, 0.0, 0.5}, ProfileSource::MarkovChain};
    const auto join = join_probabilities_birth_death(lambda, 1.0, 4);
    CHECK(join[2] == 0.0);
    CHECK(join[3] == 0.0);
    CHECK(join[0] == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("invalid input") {
    ArrivalRateProfile nan{{0.5, NAN}, ProfileSource::MarkovChain};
    CHECK_THROWS_AS(join_probabilities_birth_death(nan, 1.0, 3), NumericalError);
    ArrivalRateProfile ok{{0.5}, ProfileSource::MarkovChain};
    CHECK_THROWS_AS(join_probabilities_birth_death(ok, 0.0, 2), ParameterError);
    CHECK_THROWS_AS(join_probabilities_birth_death(ok, 1.0, 5), ParameterError);
  }
}
