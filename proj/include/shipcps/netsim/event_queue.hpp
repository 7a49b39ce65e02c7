#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "shipcps/sim_time.hpp"

namespace shipcps::netsim {

class SchedulingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using EventId = std::uint64_t;

// Min-heap of (time, priority, insertion sequence) driving the whole
// simulation. Events at equal times run by priority (lower first), then in the
// order they were scheduled.
class EventQueue {
 public:
  using Handler = std::function<void()>;

  SimTime now() const { return now_; }

  EventId schedule_at(SimTime t, Handler handler, int priority = 0);
  EventId schedule_in(SimTime delay, Handler handler) {
    return schedule_at(now_ + delay, std::move(handler));
  }
  // No-op for events that already ran or were cancelled.
  void cancel(EventId id) {
    if (live_.erase(id) > 0) cancelled_.insert(id);
  }

  // Runs every event with time <= t, then sets the clock to t.
  std::size_t run_until(SimTime t);

  std::size_t pending() const { return live_.size(); }
  std::uint64_t executed() const { return executed_; }

 private:
  struct Entry {
    SimTime time;
    int priority;
    EventId seq;
    Handler handler;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.priority != b.priority) return a.priority > b.priority;
      return a.seq > b.seq;
    }
  };

  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
  std::unordered_set<EventId> live_;
  std::unordered_set<EventId> cancelled_;
  SimTime now_ = 0;
  EventId next_seq_ = 0;
  std::uint64_t executed_ = 0;
};

}  // namespace shipcps::netsim
