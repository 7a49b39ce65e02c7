#include "shipcps/netsim/link.hpp"

#include <algorithm>
#include <cmath>

namespace shipcps::netsim {

std::string_view to_string(DropReason reason) {
  switch (reason) {
    case DropReason::kQueueFull: return "queue_full";
    case DropReason::kInjectedLoss: return "loss";
    case DropReason::kNoRoute: return "no_route";
    case DropReason::kArpTimeout: return "arp_timeout";
    case DropReason::kTtlExpired: return "ttl_expired";
  }
  return "unknown";
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t ordinal) {
  const std::uint64_t h = splitmix64(splitmix64(seed ^ splitmix64(stream)) + ordinal);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

namespace {

std::uint64_t hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

LinkDirection::LinkDirection(EventQueue& events, std::string id, LinkParams params, FrameSink* to,
                             int to_port)
    : events_(events),
      id_(std::move(id)),
      params_(params),
      to_(to),
      to_port_(to_port),
      stream_(hash_name(id_)) {}

SimTime LinkDirection::serialization_time(std::size_t bytes) const {
  const double ns = static_cast<double>(bytes) * 8.0 * 1e9 / params_.bandwidth_bps;
  return static_cast<SimTime>(std::ceil(ns - 1e-6));
}

SimTime LinkDirection::propagation_delay() const {
  SimTime delay = params_.delay;
  for (const auto& f : faults_) delay += f.extra_delay;
  return delay;
}

void LinkDirection::drop(const Frame& frame, DropReason reason) {
  if (drop_observer_ && *drop_observer_) {
    (*drop_observer_)(DropEvent{events_.now(), id_, frame, reason});
  }
}

void LinkDirection::transmit(Frame frame) {
  const std::uint64_t ordinal = offered_++;
  for (const auto& f : faults_) {
    if (f.loss > 0.0 && uniform_draw(f.seed, stream_, ordinal) < f.loss) {
      ++dropped_loss_;
      drop(frame, DropReason::kInjectedLoss);
      return;
    }
  }
  if (queue_.size() >= params_.queue_capacity) {
    ++dropped_queue_;
    drop(frame, DropReason::kQueueFull);
    return;
  }
  queue_.push_back(std::move(frame));
  if (!busy_) start_service();
}

void LinkDirection::start_service() {
  busy_ = true;
  const SimTime done = events_.now() + serialization_time(queue_.front().size_bytes());
  events_.schedule_at(done, [this] {
    Frame frame = std::move(queue_.front());
    queue_.pop_front();
    // FIFO links never reorder, even when an extra delay is lifted.
    const SimTime arrival = std::max(events_.now() + propagation_delay(), last_arrival_);
    last_arrival_ = arrival;
    ++delivered_;
    bytes_delivered_ += frame.size_bytes();
    events_.schedule_at(arrival, [this, f = std::move(frame)]() mutable {
      to_->receive(std::move(f), to_port_);
    });
    if (queue_.empty()) {
      busy_ = false;
    } else {
      start_service();
    }
  });
}

LinkDirection::FaultHandle LinkDirection::add_extra_delay(SimTime delta) {
  faults_.push_back(Fault{next_fault_, delta, 0.0, 0});
  return next_fault_++;
}

LinkDirection::FaultHandle LinkDirection::add_loss(double probability, std::uint64_t seed) {
  faults_.push_back(Fault{next_fault_, 0, probability, seed});
  return next_fault_++;
}

void LinkDirection::remove_fault(FaultHandle handle) {
  std::erase_if(faults_, [handle](const Fault& f) { return f.handle == handle; });
}

}  // namespace shipcps::netsim
