#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "jsqps/simulator.hpp"

using namespace jsqps;

namespace {

ArrivalSource script(std::vector<ScriptedArrival> arrivals) {
  auto next = std::make_shared<std::size_t>(0);
  return [arrivals = std::move(arrivals), next](Rng&) -> std::optional<ScriptedArrival> {
    if (*next >= arrivals.size()) return std::nullopt;
    return arrivals[(*next)++];
  };
}

std::vector<double> run_script(int servers, PsVariant variant,
                               std::vector<ScriptedArrival> arrivals) {
  PsFarm farm(servers, variant, Rng(1), script(std::move(arrivals)));
  while (farm.step()) {
  }
  std::vector<std::pair<std::uint64_t, double>> by_id;
  for (const auto& r : farm.departures()) by_id.emplace_back(r.id, r.departure_date);
  std::sort(by_id.begin(), by_id.end());
  std::vector<double> out;
  for (const auto& [id, d] : by_id) out.push_back(d);
  return out;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("scripted processor-sharing traces") {
  SUBCASE("lone customer") {
    const auto d = run_script(1, PsVariant::standard(), {{0.0, 2.0}});
    REQUIRE(d.size() == 1);
    CHECK(d[0] == doctest::Approx(2.0));
  }
  SUBCASE("two customers share one server") {
    const auto d = run_script(1, PsVariant::standard(), {{0.0, 2.0}, {1.0, 2.0}});
    CHECK(d[0] == doctest::Approx(3.0));
    CHECK(d[1] == doctest::Approx(4.0));
  }
  SUBCASE("two servers keep them apart") {
    const auto d = run_script(2, PsVariant::standard(), {{0.0, 2.0}, {1.0, 2.0}});
    CHECK(d[0] == doctest::Approx(2.0));
    CHECK(d[1] == doctest::Approx(3.0));
  }
  SUBCASE("limited to one served customer") {
    const auto d = run_script(1, PsVariant::limited(1), {{0.0, 2.0}, {1.0, 2.0}});
    CHECK(d[0] == doctest::Approx(2.0));
    CHECK(d[1] == doctest::Approx(4.0));
  }
  SUBCASE("capacitated at two behaves as PS for two customers") {
    const auto d = run_script(1, PsVariant::capacitated(2), {{0.0, 2.0}, {1.0, 2.0}});
    CHECK(d[0] == doctest::Approx(3.0));
    CHECK(d[1] == doctest::Approx(4.0));
  }
  SUBCASE("capacitated at three") {
    const auto d = run_script(1, PsVariant::capacitated(3),
                              {{0.0, 3.0}, {1.0, 3.0}, {2.0, 3.0}});
    CHECK(d[0] == doctest::Approx(5.0));
    CHECK(d[1] == doctest::Approx(7.0));
    CHECK(d[2] == doctest::Approx(9.0));
  }
  SUBCASE("arrivals in the past are rejected") {
    CHECK_THROWS_AS(run_script(1, PsVariant::standard(), {{1.0, 1.0}, {0.5, 1.0}}),
                    ParameterError);
    CHECK_THROWS_AS(run_script(1, PsVariant::standard(), {{1.0, 0.0}}), ParameterError);
  }
}

TEST_CASE("work conservation against a FCFS Lindley recursion") {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> gap(0.9), size(1.0);
  std::vector<ScriptedArrival> arrivals;
  double t = 0.0;
  for (int i = 0; i < 3000; ++i) {
    t += gap(rng);
    arrivals.push_back({t, size(rng)});
  }
  // Single-server FCFS: the workload path, and so every busy-period end,
  // is the same for any work-conserving discipline.
  std::vector<double> busy_ends;
  double free_at = 0.0;
  for (const auto& a : arrivals) {
    if (a.date > free_at && free_at > 0.0) busy_ends.push_back(free_at);
    free_at = std::max(free_at, a.date) + a.service;
  }
  busy_ends.push_back(free_at);

  for (auto variant : {PsVariant::standard(), PsVariant::limited(2),
                       PsVariant::capacitated(3)}) {
    PsFarm farm(1, variant, Rng(2), script(arrivals));
    std::vector<double> ends;
    while (farm.step()) {
      if (farm.occupancy()[0] == 0 && farm.next_event_date()) ends.push_back(farm.clock());
    }
    ends.push_back(farm.clock());
    REQUIRE(ends.size() == busy_ends.size());
    for (std::size_t k = 0; k < ends.size(); ++k) {
      CHECK(ends[k] == doctest::Approx(busy_ends[k]).epsilon(1e-9));
    }
    CHECK(farm.max_service_error() < 1e-9);
    CHECK(farm.dates_monotone());
    CHECK(farm.departures().size() == arrivals.size());
  }
}

TEST_CASE("remaining work drains at unit rate") {
  PsFarm farm(1, PsVariant::standard(), Rng(3),
              script({{0.0, 2.0}, {0.5, 1.0}, {0.7, 4.0}}));
  farm.step();
  CHECK(farm.remaining_work(0) == doctest::Approx(2.0));
  farm.step();
  CHECK(farm.remaining_work(0) == doctest::Approx(2.5));
  farm.step();
  CHECK(farm.remaining_work(0) == doctest::Approx(6.3));
  farm.step();
  CHECK(farm.remaining_work(0) == doctest::Approx(7.0 - farm.clock()));
}

TEST_CASE("service sampling") {
  Rng rng(99);
  const int n = 200000;
  auto moments = [&](const ServiceDistribution& d) {
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = sample_service(d, rng);
      REQUIRE(x > 0.0);
      s += x;
      s2 += x * x;
    }
    return std::pair{s / n, s2 / n - (s / n) * (s / n)};
  };
  const auto [em, ev] = moments(ServiceDistribution::exponential(2.0));
  CHECK(em == doctest::Approx(0.5).epsilon(0.01));
  CHECK(ev == doctest::Approx(0.25).epsilon(0.03));
  const auto [um, uv] = moments(ServiceDistribution::uniform_with_rate(1.0));
  CHECK(um == doctest::Approx(1.0).epsilon(0.01));
  CHECK(uv == doctest::Approx(1.0 / 12.0).epsilon(0.03));
  const auto [dm, dv] = moments(ServiceDistribution::deterministic_with_rate(4.0));
  CHECK(dm == 0.25);
  CHECK(dv == doctest::Approx(0.0));
  CHECK(ServiceDistribution::uniform(1.0, 3.0).mean() == 2.0);
  CHECK_THROWS_AS(ServiceDistribution::exponential(0.0), ParameterError);
  CHECK_THROWS_AS(ServiceDistribution::uniform(2.0, 1.0), ParameterError);
  CHECK_THROWS_AS(ServiceDistribution::deterministic(-1.0), ParameterError);
}

TEST_CASE("JSQ routing") {
  Rng rng(4);
  CHECK(jsq_route(std::vector<int>{2, 0, 1}, rng) == 1);
  CHECK(jsq_route(std::vector<int>{3}, rng) == 0);
  CHECK_THROWS_AS(jsq_route(std::vector<int>{}, rng), ParameterError);
  for (int i = 0; i < 100; ++i) {
    const auto u = jsq_route(std::vector<int>{1, 0, 2, 0}, rng);
    CHECK((u == 1 || u == 3));
  }
  // Chi-squared with 3 degrees of freedom; 16.27 is the 0.999 quantile.
  std::vector<int> hits(4, 0);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) ++hits[jsq_route(std::vector<int>{0, 0, 0, 0}, rng)];
  double chi2 = 0.0;
  for (int h : hits) chi2 += (h - draws / 4.0) * (h - draws / 4.0) / (draws / 4.0);
  CHECK(chi2 < 16.27);
}

TEST_CASE("PS variant parsing") {
  CHECK(PsVariant::parse("standard").kind == PsVariant::Kind::Standard);
  const auto l = PsVariant::parse("limited:3");
  CHECK(l.kind == PsVariant::Kind::Limited);
  CHECK(l.threshold == 3);
  CHECK(PsVariant::parse("capacitated:2").describe() == "capacitated:2");
  CHECK_THROWS_AS(PsVariant::parse("limited:0"), ParameterError);
  CHECK_THROWS_AS(PsVariant::parse("limited:x"), ParameterError);
  CHECK_THROWS_AS(PsVariant::parse("fifo"), ParameterError);
  CHECK_THROWS_AS(PsVariant::parse("other:2"), ParameterError);
}

TEST_CASE("simulation configuration") {
  SimulationConfig sim(SystemConfig::from_load(1, 0.5));
  CHECK(sim.q_max == 160000.0);
  CHECK(sim.trials == 4);
  CHECK_NOTHROW(sim.validate());
  sim.q_warmup = sim.q_max;
  CHECK_THROWS_AS(sim.validate(), ParameterError);
  sim.q_warmup = 0.0;
  sim.trials = 0;
  CHECK_THROWS_AS(sim.validate(), ParameterError);
}

TEST_CASE("M/M/1-PS simulated mean") {
  SimulationConfig sim(SystemConfig::from_load(1, 0.5));
  sim.q_max = 40000.0;
  sim.q_warmup = 2000.0;
  sim.seed = 17;
  const auto trial = run_trial(sim, 0);
  CHECK(mean(trial.sojourns) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(trial.max_service_error < 1e-9);
  CHECK(trial.dates_monotone);
}

TEST_CASE("determinism and seeds") {
  SimulationConfig sim(SystemConfig::from_load(3, 0.7));
  sim.q_max = 5000.0;
  sim.q_warmup = 500.0;
  sim.trials = 2;
  sim.seed = 42;
  const auto a = run_simulation(sim);
  const auto b = run_simulation(sim);
  CHECK(a.samples() == b.samples());
  CHECK(a.trials[0].sojourns != a.trials[1].sojourns);
  sim.seed = 43;
  CHECK(run_simulation(sim).samples() != a.samples());
}

TEST_CASE("99th percentile is stable across seeds") {
  const auto grid = make_time_grid(100.0, 0.01);
  std::vector<double> p99;
  for (std::uint64_t seed : {1, 2, 3}) {
    SimulationConfig sim(SystemConfig::from_load(2, 0.7));
    sim.q_max = 40000.0;
    sim.q_warmup = 2000.0;
    sim.seed = seed;
    const auto result = run_simulation(sim);
    const auto samples = result.samples();
    p99.push_back(percentile(aggregate_trials(samples, grid), 0.99));
  }
  const double centre = mean(p99);
  for (double p : p99) CHECK(std::abs(p - centre) < 0.05 * centre);
}

TEST_CASE("warm-up filter counts arrivals from q_warmup on") {
  SimulationConfig sim(SystemConfig(1, 1.0, 2.0));
  sim.service = ServiceDistribution::deterministic(0.5);
  sim.inter_arrival = [](Rng&) { return 1.0; };
  sim.q_max = 10.25;
  sim.q_warmup = 3.0;
  const auto trial = run_trial(sim, 0);
  // Arrivals at 3..9 finish by q_max; the one at 10 does not.
  REQUIRE(trial.sojourns.size() == 7);
  for (double s : trial.sojourns) CHECK(s == doctest::Approx(0.5));
}

TEST_CASE("aggregate_trials") {
  const auto grid = make_time_grid(3.0, 1.0);
  const std::vector<std::vector<double>> trials = {{1.0}, {2.0}};
  const auto cdf = aggregate_trials(trials, grid);
  CHECK(cdf.values == std::vector<double>{0.0, 0.5, 1.0, 1.0});
  CHECK_THROWS_AS(aggregate_trials(std::vector<std::vector<double>>{}, grid), ParameterError);
  CHECK_THROWS_AS(aggregate_trials(std::vector<std::vector<double>>{{1.0}, {}}, grid),
                  ParameterError);
}

TEST_CASE("sample dump") {
  const auto dir = std::filesystem::temp_directory_path() / "jsqps_dump_test";
  std::filesystem::create_directories(dir);
  SimulationResult result;
  result.trials.resize(2);
  result.trials[0].sojourns = {1.0 / 3.0, 2.5};
  result.trials[1].sojourns = {123456.789012345};
  const auto prefix = (dir / "run").string();
  write_sample_dump(prefix, result);
  std::ifstream first(prefix + ".trial0.samples");
  std::string line;
  std::getline(first, line);
  CHECK(line == "0.333333333333");
  std::getline(first, line);
  CHECK(line == "2.5");
  std::ifstream second(prefix + ".trial1.samples");
  std::getline(second, line);
  CHECK(line == "123456.789012");
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(write_sample_dump("/nonexistent/dir/run", result), ResourceError);
}
