#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <tuple>
#include <unordered_map>

namespace jsqps {

/// Same-date events pop in this order.
enum class EventKind : std::uint8_t { EndService = 0, Arrival = 1 };

using EventId = std::uint64_t;

struct Event {
  double date;
  EventKind kind;
  EventId id;
  std::uint64_t payload;  // customer id for end-service events
};

/// Pending events ordered by (date, kind, insertion order). Every event keeps
/// its id across reschedules.
class EventCalendar {
 public:
  EventId schedule(double date, EventKind kind, std::uint64_t payload = 0);

  /// Moves a pending event to `date`. Throws InternalError for unknown ids.
  void reschedule(EventId id, double date);

  /// Removes a pending event. Throws InternalError for unknown ids.
  void cancel(EventId id);

  bool contains(EventId id) const { return index_.contains(id); }
  std::optional<double> date_of(EventId id) const;

  /// Earliest pending event, without removing it.
  std::optional<Event> peek() const;
  std::optional<Event> pop();

  bool empty() const noexcept { return queue_.empty(); }
  std::size_t size() const noexcept { return queue_.size(); }

 private:
  struct Key {
    double date;
    EventKind kind;
    std::uint64_t order;
    EventId id;
    std::uint64_t payload;

    bool operator<(const Key& other) const {
      return std::tie(date, kind, order) <
             std::tie(other.date, other.kind, other.order);
    }
  };

  std::set<Key> queue_;
  std::unordered_map<EventId, std::set<Key>::iterator> index_;
  std::uint64_t next_order_ = 0;
  EventId next_id_ = 0;
};

}  // namespace jsqps
