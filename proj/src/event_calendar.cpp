#include "jsqps/event_calendar.hpp"

#include <fmt/format.h>

#include "jsqps/errors.hpp"

namespace jsqps {

EventId EventCalendar::schedule(double date, EventKind kind,
                                std::uint64_t payload) {
  const EventId id = next_id_++;
  const auto [it, inserted] =
      queue_.insert(Key{date, kind, next_order_++, id, payload});
  index_.emplace(id, it);
  return id;
}

void EventCalendar::reschedule(EventId id, double date) {
  const auto found = index_.find(id);
  if (found == index_.end()) {
    throw InternalError(fmt::format("reschedule of unknown event {}", id));
  }
  Key key = *found->second;
  queue_.erase(found->second);
  key.date = date;
  key.order = next_order_++;
  found->second = queue_.insert(key).first;
}

void EventCalendar::cancel(EventId id) {
  const auto found = index_.find(id);
  if (found == index_.end()) {
    throw InternalError(fmt::format("cancel of unknown event {}", id));
  }
  queue_.erase(found->second);
  index_.erase(found);
}

std::optional<double> EventCalendar::date_of(EventId id) const {
  const auto found = index_.find(id);
  if (found == index_.end()) return std::nullopt;
  return found->second->date;
}

std::optional<Event> EventCalendar::peek() const {
  if (queue_.empty()) return std::nullopt;
  const Key& key = *queue_.begin();
  return Event{key.date, key.kind, key.id, key.payload};
}

std::optional<Event> EventCalendar::pop() {
  if (queue_.empty()) return std::nullopt;
  const Key key = *queue_.begin();
  queue_.erase(queue_.begin());
  index_.erase(key.id);
  return Event{key.date, key.kind, key.id, key.payload};
}

}  // namespace jsqps
