#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "jsqps/core.hpp"
#include "jsqps/event_calendar.hpp"

namespace jsqps {

using Rng = std::mt19937_64;

/// Independent generator for trial `trial` derived from one master seed
/// (SplitMix64 mixing of seed and trial index).
Rng trial_rng(std::uint64_t seed, int trial);

class ServiceDistribution {
 public:
  enum class Kind { Exponential, Uniform, Deterministic };

  static ServiceDistribution exponential(double rate);
  static ServiceDistribution uniform(double low, double high);
  static ServiceDistribution deterministic(double value);

  /// U(1/(2 mu), 3/(2 mu)) and the constant 1/mu: same mean as Exp(mu).
  static ServiceDistribution uniform_with_rate(double rate);
  static ServiceDistribution deterministic_with_rate(double rate);

  Kind kind() const noexcept { return kind_; }
  double first() const noexcept { return first_; }
  double second() const noexcept { return second_; }
  double mean() const noexcept;
  std::string describe() const;

 private:
  ServiceDistribution(Kind kind, double first, double second)
      : kind_(kind), first_(first), second_(second) {}

  Kind kind_;
  double first_;   // rate, lower bound or constant
  double second_;  // upper bound for uniform
};

double sample_service(const ServiceDistribution& dist, Rng& rng);

/// Index of a server with the fewest customers; ties broken uniformly.
std::size_t jsq_route(std::span<const int> counts, Rng& rng);

struct PsVariant {
  enum class Kind { Standard, Limited, Capacitated };
  Kind kind = Kind::Standard;
  int threshold = 0;

  static PsVariant standard() { return {}; }
  static PsVariant limited(int k) { return {Kind::Limited, k}; }
  static PsVariant capacitated(int k) { return {Kind::Capacitated, k}; }

  /// "standard", "limited:k" or "capacitated:k".
  static PsVariant parse(std::string_view text);
  std::string describe() const;
};

struct CustomerRecord {
  std::uint64_t id = 0;
  double arrival_date = 0.0;
  double intended_service = 0.0;
  double received_service = 0.0;
  int server_id = 0;
  double scheduled_end = 0.0;
  double departure_date = 0.0;
};

struct ScriptedArrival {
  double date;
  double service;
};

/// Supplies the next arrival, or nullopt when the stream ends.
using ArrivalSource = std::function<std::optional<ScriptedArrival>(Rng&)>;

/// R servers with JSQ routing and processor sharing, run by an event
/// calendar. On every arrival or departure at a server the received service
/// of its customers is advanced and their end-service events rescheduled.
class PsFarm {
 public:
  PsFarm(int servers, PsVariant variant, Rng rng, ArrivalSource source);

  /// Processes the earliest pending event; false when none is left.
  bool step();
  /// Processes every event dated <= horizon.
  void run_until(double horizon);

  double clock() const noexcept { return clock_; }
  std::optional<double> next_event_date() const;
  std::vector<int> occupancy() const;
  /// Unfinished work at `server` as of the current clock.
  double remaining_work(int server) const;

  /// Departed customers in departure order.
  const std::vector<CustomerRecord>& departures() const noexcept {
    return departures_;
  }
  /// Largest |received - intended| seen at a departure.
  double max_service_error() const noexcept { return max_service_error_; }
  std::size_t events() const noexcept { return events_; }
  bool dates_monotone() const noexcept { return dates_monotone_; }

  /// Called for every departure instead of storing it in departures().
  void on_departure(std::function<void(const CustomerRecord&)> hook) {
    departure_hook_ = std::move(hook);
  }

 private:
  struct Customer {
    CustomerRecord record;
    double share = 0.0;
    std::optional<EventId> end_event;
  };
  struct Server {
    std::vector<Customer> customers;  // arrival order
    double last_update = 0.0;
  };

  void schedule_next_arrival();
  void handle_arrival(double date);
  void handle_departure(double date, std::uint64_t customer_id);
  void advance(Server& server, double date);
  void reassign(Server& server, double date);

  PsVariant variant_;
  Rng rng_;
  ArrivalSource source_;
  EventCalendar calendar_;
  std::vector<Server> servers_;
  std::unordered_map<std::uint64_t, int> location_;
  std::optional<ScriptedArrival> pending_;
  std::vector<CustomerRecord> departures_;
  std::uint64_t next_customer_ = 0;
  double clock_ = 0.0;
  double max_service_error_ = 0.0;
  std::size_t events_ = 0;
  bool dates_monotone_ = true;
  std::function<void(const CustomerRecord&)> departure_hook_;
};

using InterArrivalSampler = std::function<double(Rng&)>;

inline constexpr double kDefaultSimulationTime = 160000.0;
inline constexpr double kDefaultWarmup = 8000.0;
inline constexpr int kDefaultTrials = 4;

struct SimulationConfig {
  SystemConfig system;
  ServiceDistribution service;
  double q_max = kDefaultSimulationTime;
  double q_warmup = kDefaultWarmup;
  int trials = kDefaultTrials;
  std::uint64_t seed = 0;
  PsVariant variant;
  InterArrivalSampler inter_arrival;  // empty: Poisson with rate Lambda

  explicit SimulationConfig(SystemConfig sys)
      : system(sys),
        service(ServiceDistribution::exponential(sys.service_rate())) {}

  void validate() const;
};

struct TrialResult {
  std::vector<double> sojourns;  // customers arriving at or after q_warmup
  double max_service_error = 0.0;
  std::size_t events = 0;
  bool dates_monotone = true;
};

struct SimulationResult {
  std::vector<TrialResult> trials;

  std::vector<std::vector<double>> samples() const;
};

TrialResult run_trial(const SimulationConfig& sim, int trial);

/// Runs every trial on its own thread and RNG stream.
SimulationResult run_simulation(const SimulationConfig& sim);

/// Pointwise mean of the per-trial empirical CDFs.
SojournCdf aggregate_trials(std::span<const std::vector<double>> trials,
                            const TimeGrid& grid);

/// Writes "<prefix>.trial<k>.samples", one sojourn per line.
void write_sample_dump(const std::string& prefix, const SimulationResult& result);

}  // namespace jsqps
