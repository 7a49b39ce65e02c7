#include "shipcps/netsim/event_queue.hpp"

#include <string>

namespace shipcps::netsim {

EventId EventQueue::schedule_at(SimTime t, Handler handler, int priority) {
  if (t < now_) {
    throw SchedulingError("cannot schedule at " + std::to_string(t) + " ns, clock is at " +
                          std::to_string(now_) + " ns");
  }
  const EventId id = next_seq_++;
  heap_.push(Entry{t, priority, id, std::move(handler)});
  live_.insert(id);
  return id;
}

std::size_t EventQueue::run_until(SimTime t) {
  if (t < now_) throw SchedulingError("run_until target is in the past");
  std::size_t count = 0;
  while (!heap_.empty() && heap_.top().time <= t) {
    // priority_queue::top is const; the entry is discarded right after.
    Entry entry = std::move(const_cast<Entry&>(heap_.top()));
    heap_.pop();
    if (auto it = cancelled_.find(entry.seq); it != cancelled_.end()) {
      cancelled_.erase(it);
      continue;
    }
    live_.erase(entry.seq);
    now_ = entry.time;
    entry.handler();
    ++count;
    ++executed_;
  }
  now_ = t;
  return count;
}

}  // namespace shipcps::netsim
