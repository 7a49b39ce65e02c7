#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "shipcps/netsim/event_queue.hpp"
#include "shipcps/netsim/packet.hpp"
#include "shipcps/sim_time.hpp"

namespace shipcps::netsim {

struct LinkParams {
  double bandwidth_bps = 10e6;
  SimTime delay = 0;
  std::size_t queue_capacity = 50;
};

// Anything a link can deliver frames to.
class FrameSink {
 public:
  virtual ~FrameSink() = default;
  virtual void receive(Frame frame, int port) = 0;
  virtual const std::string& name() const = 0;
};

enum class DropReason { kQueueFull, kInjectedLoss, kNoRoute, kArpTimeout, kTtlExpired };

std::string_view to_string(DropReason reason);

struct DropEvent {
  SimTime time;
  std::string_view where;
  const Frame& frame;
  DropReason reason;
};

using DropObserver = std::function<void(const DropEvent&)>;

// 64-bit mixer used for reproducible per-packet random draws.
std::uint64_t splitmix64(std::uint64_t x);
// Uniform [0, 1) draw that depends only on (seed, stream, ordinal).
double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t ordinal);

// One direction of a duplex link: a drop-tail FIFO feeding a serializer,
// followed by a fixed propagation delay.
class LinkDirection {
 public:
  using FaultHandle = std::uint64_t;

  LinkDirection(EventQueue& events, std::string id, LinkParams params, FrameSink* to, int to_port);

  LinkDirection(const LinkDirection&) = delete;
  LinkDirection& operator=(const LinkDirection&) = delete;

  // Accepts or drops the frame; drops are reported, never thrown.
  void transmit(Frame frame);

  void set_drop_observer(DropObserver* observer) { drop_observer_ = observer; }

  FaultHandle add_extra_delay(SimTime delta);
  FaultHandle add_loss(double probability, std::uint64_t seed);
  void remove_fault(FaultHandle handle);

  SimTime serialization_time(std::size_t bytes) const;
  SimTime propagation_delay() const;

  const std::string& id() const { return id_; }
  const LinkParams& params() const { return params_; }
  FrameSink* destination() const { return to_; }
  std::size_t queue_length() const { return queue_.size(); }

  std::uint64_t offered() const { return offered_; }
  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t dropped_queue() const { return dropped_queue_; }
  std::uint64_t dropped_loss() const { return dropped_loss_; }
  std::uint64_t bytes_delivered() const { return bytes_delivered_; }

 private:
  struct Fault {
    FaultHandle handle;
    SimTime extra_delay = 0;
    double loss = 0.0;
    std::uint64_t seed = 0;
  };

  void start_service();
  void drop(const Frame& frame, DropReason reason);

  EventQueue& events_;
  std::string id_;
  LinkParams params_;
  FrameSink* to_;
  int to_port_;
  DropObserver* drop_observer_ = nullptr;
  std::uint64_t stream_;

  std::deque<Frame> queue_;  // front is in service while busy_
  bool busy_ = false;
  SimTime last_arrival_ = 0;
  std::vector<Fault> faults_;
  FaultHandle next_fault_ = 1;

  std::uint64_t offered_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_queue_ = 0;
  std::uint64_t dropped_loss_ = 0;
  std::uint64_t bytes_delivered_ = 0;
};

struct Link {
  std::string id;
  LinkDirection forward;  // a -> b
  LinkDirection reverse;  // b -> a

  Link(EventQueue& events, std::string link_id, LinkParams params, FrameSink* a, int a_port,
       FrameSink* b, int b_port)
      : id(link_id),
        forward(events, link_id + ">", params, b, b_port),
        reverse(events, link_id + "<", params, a, a_port) {}
};

}  // namespace shipcps::netsim
