#include "jsqps/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>

#include <fmt/format.h>

namespace jsqps {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng trial_rng(std::uint64_t seed, int trial) {
  return Rng(splitmix64(splitmix64(seed) ^
                        splitmix64(static_cast<std::uint64_t>(trial) + 1)));
}

ServiceDistribution ServiceDistribution::exponential(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw ParameterError(fmt::format("exponential rate must be > 0, got {}", rate));
  }
  return {Kind::Exponential, rate, 0.0};
}

ServiceDistribution ServiceDistribution::uniform(double low, double high) {
  if (!(low >= 0.0) || !(low < high) || !std::isfinite(high)) {
    throw ParameterError(
        fmt::format("uniform service needs 0 <= a < b, got ({}, {})", low, high));
  }
  return {Kind::Uniform, low, high};
}

ServiceDistribution ServiceDistribution::deterministic(double value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ParameterError(
        fmt::format("deterministic service must be > 0, got {}", value));
  }
  return {Kind::Deterministic, value, 0.0};
}

ServiceDistribution ServiceDistribution::uniform_with_rate(double rate) {
  return uniform(1.0 / (2.0 * rate), 3.0 / (2.0 * rate));
}

ServiceDistribution ServiceDistribution::deterministic_with_rate(double rate) {
  return deterministic(1.0 / rate);
}

double ServiceDistribution::mean() const noexcept {
  switch (kind_) {
    case Kind::Exponential: return 1.0 / first_;
    case Kind::Uniform: return 0.5 * (first_ + second_);
    case Kind::Deterministic: return first_;
  }
  return 0.0;
}

std::string ServiceDistribution::describe() const {
  switch (kind_) {
    case Kind::Exponential: return fmt::format("exp({})", first_);
    case Kind::Uniform: return fmt::format("uniform({},{})", first_, second_);
    case Kind::Deterministic: return fmt::format("det({})", first_);
  }
  return "?";
}

double sample_service(const ServiceDistribution& dist, Rng& rng) {
  switch (dist.kind()) {
    case ServiceDistribution::Kind::Exponential: {
      std::exponential_distribution<double> d(dist.first());
      double s = 0.0;
      while (s <= 0.0) s = d(rng);
      return s;
    }
    case ServiceDistribution::Kind::Uniform: {
      std::uniform_real_distribution<double> d(dist.first(), dist.second());
      double s = 0.0;
      while (s <= 0.0) s = d(rng);
      return s;
    }
    case ServiceDistribution::Kind::Deterministic:
      return dist.first();
  }
  throw InternalError("unknown service distribution");
}

std::size_t jsq_route(std::span<const int> counts, Rng& rng) {
  if (counts.empty()) throw ParameterError("JSQ routing needs R >= 1 servers");
  const int shortest = *std::min_element(counts.begin(), counts.end());
  const auto ties = std::count(counts.begin(), counts.end(), shortest);
  std::size_t pick = 0;
  if (ties > 1) {
    std::uniform_int_distribution<long> d(0, ties - 1);
    pick = static_cast<std::size_t>(d(rng));
  }
  for (std::size_t u = 0; u < counts.size(); ++u) {
    if (counts[u] == shortest && pick-- == 0) return u;
  }
  throw InternalError("JSQ routing found no minimum");
}

PsVariant PsVariant::parse(std::string_view text) {
  if (text == "standard") return standard();
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ParameterError(fmt::format("unknown PS variant '{}'", text));
  }
  const auto name = text.substr(0, colon);
  const auto number = text.substr(colon + 1);
  int k = 0;
  const auto [end, ec] =
      std::from_chars(number.data(), number.data() + number.size(), k);
  if (ec != std::errc() || end != number.data() + number.size() || k < 1) {
    throw ParameterError(fmt::format("PS variant '{}' needs a threshold >= 1", text));
  }
  if (name == "limited") return limited(k);
  if (name == "capacitated") return capacitated(k);
  throw ParameterError(fmt::format("unknown PS variant '{}'", text));
}

std::string PsVariant::describe() const {
  switch (kind) {
    case Kind::Standard: return "standard";
    case Kind::Limited: return fmt::format("limited:{}", threshold);
    case Kind::Capacitated: return fmt::format("capacitated:{}", threshold);
  }
  return "?";
}

PsFarm::PsFarm(int servers, PsVariant variant, Rng rng, ArrivalSource source)
    : variant_(variant),
      rng_(std::move(rng)),
      source_(std::move(source)),
      servers_(static_cast<std::size_t>(servers)) {
  if (servers < 1) throw ParameterError("PS farm needs R >= 1");
  if (variant.kind != PsVariant::Kind::Standard && variant.threshold < 1) {
    throw ParameterError("PS variant threshold must be >= 1");
  }
  schedule_next_arrival();
}

void PsFarm::schedule_next_arrival() {
  pending_ = source_ ? source_(rng_) : std::nullopt;
  if (pending_) {
    if (pending_->date < clock_ || !(pending_->service > 0.0)) {
      throw ParameterError(fmt::format(
          "arrival at {} with service {} is invalid at clock {}",
          pending_->date, pending_->service, clock_));
    }
    calendar_.schedule(pending_->date, EventKind::Arrival);
  }
}

std::optional<double> PsFarm::next_event_date() const {
  const auto next = calendar_.peek();
  if (!next) return std::nullopt;
  return next->date;
}

bool PsFarm::step() {
  const auto event = calendar_.pop();
  if (!event) return false;
  if (event->date < clock_) dates_monotone_ = false;
  clock_ = event->date;
  ++events_;
  if (event->kind == EventKind::Arrival) {
    handle_arrival(event->date);
  } else {
    handle_departure(event->date, event->payload);
  }
  return true;
}

void PsFarm::run_until(double horizon) {
  while (true) {
    const auto next = next_event_date();
    if (!next || *next > horizon) break;
    step();
  }
}

std::vector<int> PsFarm::occupancy() const {
  std::vector<int> counts(servers_.size());
  for (std::size_t u = 0; u < servers_.size(); ++u) {
    counts[u] = static_cast<int>(servers_[u].customers.size());
  }
  return counts;
}

double PsFarm::remaining_work(int server) const {
  const Server& s = servers_.at(static_cast<std::size_t>(server));
  double work = 0.0;
  for (const auto& c : s.customers) {
    work += c.record.intended_service - c.record.received_service -
            c.share * (clock_ - s.last_update);
  }
  return work;
}

void PsFarm::advance(Server& server, double date) {
  const double elapsed = date - server.last_update;
  if (elapsed > 0.0) {
    for (auto& c : server.customers) c.record.received_service += c.share * elapsed;
  }
  server.last_update = date;
}

void PsFarm::reassign(Server& server, double date) {
  const auto present = server.customers.size();
  if (present == 0) return;
  std::size_t sharing = present;
  switch (variant_.kind) {
    case PsVariant::Kind::Standard:
      break;
    case PsVariant::Kind::Limited:
      sharing = std::min(present, static_cast<std::size_t>(variant_.threshold));
      break;
    case PsVariant::Kind::Capacitated:
      if (present < static_cast<std::size_t>(variant_.threshold)) sharing = 1;
      break;
  }
  const double share = 1.0 / static_cast<double>(sharing);
  for (std::size_t k = 0; k < present; ++k) {
    Customer& c = server.customers[k];
    c.share = k < sharing ? share : 0.0;
    if (c.share > 0.0) {
      const double left =
          std::max(0.0, c.record.intended_service - c.record.received_service);
      c.record.scheduled_end = date + left / c.share;
      if (c.end_event) {
        calendar_.reschedule(*c.end_event, c.record.scheduled_end);
      } else {
        c.end_event = calendar_.schedule(c.record.scheduled_end,
                                         EventKind::EndService, c.record.id);
      }
    } else if (c.end_event) {
      calendar_.cancel(*c.end_event);
      c.end_event.reset();
    }
  }
}

void PsFarm::handle_arrival(double date) {
  const ScriptedArrival arrival = *pending_;
  const auto counts = occupancy();
  const auto target = jsq_route(counts, rng_);
  Server& server = servers_[target];
  advance(server, date);

  Customer c;
  c.record.id = next_customer_++;
  c.record.arrival_date = date;
  c.record.intended_service = arrival.service;
  c.record.server_id = static_cast<int>(target);
  location_.emplace(c.record.id, static_cast<int>(target));
  server.customers.push_back(c);
  reassign(server, date);
  schedule_next_arrival();
}

void PsFarm::handle_departure(double date, std::uint64_t customer_id) {
  const auto where = location_.find(customer_id);
  if (where == location_.end()) {
    throw InternalError(fmt::format("end of service for unknown customer {}",
                                    customer_id));
  }
  Server& server = servers_[static_cast<std::size_t>(where->second)];
  location_.erase(where);
  advance(server, date);
  const auto it = std::find_if(
      server.customers.begin(), server.customers.end(),
      [customer_id](const Customer& c) { return c.record.id == customer_id; });
  if (it == server.customers.end()) {
    throw InternalError(
        fmt::format("customer {} missing from its server", customer_id));
  }
  CustomerRecord record = it->record;
  server.customers.erase(it);
  const double error =
      std::abs(record.received_service - record.intended_service);
  max_service_error_ = std::max(max_service_error_, error);
  record.departure_date = date;
  if (departure_hook_) {
    departure_hook_(record);
  } else {
    departures_.push_back(record);
  }
  reassign(server, date);
}

void SimulationConfig::validate() const {
  if (!(q_max > 0.0) || !(q_warmup >= 0.0) || !(q_warmup < q_max)) {
    throw ParameterError(fmt::format(
        "simulation needs 0 <= warmup < q_max, got warmup={}, q_max={}",
        q_warmup, q_max));
  }
  if (trials < 1) {
    throw ParameterError(fmt::format("trials must be >= 1, got {}", trials));
  }
  if (variant.kind != PsVariant::Kind::Standard && variant.threshold < 1) {
    throw ParameterError("PS variant threshold must be >= 1");
  }
}

std::vector<std::vector<double>> SimulationResult::samples() const {
  std::vector<std::vector<double>> out;
  out.reserve(trials.size());
  for (const auto& t : trials) out.push_back(t.sojourns);
  return out;
}

TrialResult run_trial(const SimulationConfig& sim, int trial) {
  sim.validate();
  const double lambda = sim.system.arrival_rate();
  const ServiceDistribution service = sim.service;
  const InterArrivalSampler gaps =
      sim.inter_arrival ? sim.inter_arrival : InterArrivalSampler([lambda](Rng& rng) {
        return std::exponential_distribution<double>(lambda)(rng);
      });
  double next_date = 0.0;
  ArrivalSource source = [&next_date, gaps, service](Rng& rng) {
    next_date += gaps(rng);
    return std::optional<ScriptedArrival>(
        ScriptedArrival{next_date, sample_service(service, rng)});
  };
  PsFarm farm(sim.system.servers(), sim.variant, trial_rng(sim.seed, trial),
              std::move(source));
  TrialResult result;
  const double warmup = sim.q_warmup;
  farm.on_departure([&result, warmup](const CustomerRecord& record) {
    if (record.arrival_date >= warmup) {
      result.sojourns.push_back(record.departure_date - record.arrival_date);
    }
  });
  farm.run_until(sim.q_max);

  result.max_service_error = farm.max_service_error();
  result.events = farm.events();
  result.dates_monotone = farm.dates_monotone();
  return result;
}

SimulationResult run_simulation(const SimulationConfig& sim) {
  sim.validate();
  std::vector<std::future<TrialResult>> pending;
  pending.reserve(static_cast<std::size_t>(sim.trials));
  for (int k = 0; k < sim.trials; ++k) {
    pending.push_back(std::async(std::launch::async, run_trial, std::cref(sim), k));
  }
  SimulationResult result;
  for (auto& f : pending) result.trials.push_back(f.get());
  return result;
}

SojournCdf aggregate_trials(std::span<const std::vector<double>> trials,
                            const TimeGrid& grid) {
  if (trials.empty()) throw ParameterError("no simulation trials to aggregate");
  SojournCdf out{grid, std::vector<double>(grid.size(), 0.0), "simulation"};
  for (std::size_t k = 0; k < trials.size(); ++k) {
    if (trials[k].empty()) {
      throw ParameterError(fmt::format("simulation trial {} has no samples", k));
    }
    const SojournCdf single = empirical_cdf(trials[k], grid);
    for (std::size_t i = 0; i < grid.size(); ++i) out.values[i] += single.values[i];
  }
  const double count = static_cast<double>(trials.size());
  for (double& v : out.values) v /= count;
  return out;
}

void write_sample_dump(const std::string& prefix, const SimulationResult& result) {
  for (std::size_t k = 0; k < result.trials.size(); ++k) {
    const std::string path = fmt::format("{}.trial{}.samples", prefix, k);
    std::ofstream out(path);
    if (!out) throw ResourceError(fmt::format("cannot write '{}'", path));
    for (double s : result.trials[k].sojourns) out << fmt::format("{:.12g}\n", s);
  }
}

}  // namespace jsqps
