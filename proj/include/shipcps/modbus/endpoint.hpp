#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "shipcps/modbus/codec.hpp"
#include "shipcps/modbus/registers.hpp"
#include "shipcps/netsim/transport.hpp"
#include "shipcps/plant.hpp"

namespace shipcps::modbus {

struct GatewayConfig {
  SimTime period = millis(100);
  // Also push every refresh to the controller as an unsolicited read-input
  // response (transaction id 0) in a datagram.
  bool publish = false;
  netsim::Ipv4Address report_to;
  SimTime phase = 0;
};

// Modbus slave embedded in a device node, bridging its register file to the
// plant.
class Gateway {
 public:
  Gateway(netsim::Transport& transport, plant::Plant& plant, DeviceLayout layout,
          GatewayConfig config);

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void start();
  // Changes the reporting period; the next refresh happens one new period
  // from now.
  void set_period(SimTime period);
  SimTime period() const { return config_.period; }

  const DeviceLayout& layout() const { return layout_; }
  const RegisterFile& registers() const { return registers_; }
  // Serves a request in-process, as if it had arrived on the wire.
  Pdu handle(const Pdu& request);

  std::uint64_t requests_served() const { return requests_served_; }
  std::uint64_t exceptions_sent() const { return exceptions_sent_; }
  std::uint64_t reports_sent() const { return reports_sent_; }
  std::uint64_t refreshes() const { return refreshes_; }

 private:
  struct Session {
    std::shared_ptr<netsim::Channel> channel;
    StreamBuffer buffer;
  };

  void refresh();
  void schedule_refresh(SimTime at);
  void on_bytes(Session& session, const std::vector<std::uint8_t>& bytes);

  netsim::Transport& transport_;
  plant::Plant& plant_;
  DeviceLayout layout_;
  GatewayConfig config_;
  RegisterFile registers_;
  std::map<netsim::Channel*, std::unique_ptr<Session>> sessions_;
  netsim::EventId next_refresh_ = 0;
  bool started_ = false;
  std::uint64_t requests_served_ = 0;
  std::uint64_t exceptions_sent_ = 0;
  std::uint64_t reports_sent_ = 0;
  std::uint64_t refreshes_ = 0;
};

struct Outcome {
  enum class Kind { kValues, kWriteAck, kTimeout, kChannelReset, kException };
  Kind kind = Kind::kTimeout;
  std::uint16_t transaction_id = 0;
  std::vector<std::uint16_t> values;
  std::uint8_t exception = 0;
  SimTime sent_at = 0;
  // Time from request to resolution; for timeouts, the age of the request.
  SimTime age = 0;
};

std::string_view to_string(Outcome::Kind kind);

// Modbus master: one channel per device, requests matched by transaction id.
class Master {
 public:
  using Callback = std::function<void(const Outcome&)>;
  using ReportHandler = std::function<void(netsim::Ipv4Address from, const Adu& adu)>;

  Master(netsim::Transport& transport, SimTime timeout = millis(250));

  Master(const Master&) = delete;
  Master& operator=(const Master&) = delete;

  std::uint16_t read(netsim::Ipv4Address device, std::uint8_t unit, std::uint8_t function,
                     std::uint16_t address, std::uint16_t quantity, Callback done);
  std::uint16_t write(netsim::Ipv4Address device, std::uint8_t unit, std::uint16_t address,
                      std::vector<std::uint16_t> values, Callback done);

  // Unsolicited reports arriving as datagrams on the Modbus port.
  void on_report(ReportHandler handler);

  void set_timeout(SimTime timeout) { timeout_ = timeout; }
  SimTime timeout() const { return timeout_; }

  std::uint64_t discarded_responses() const { return discarded_; }
  std::uint64_t timeouts() const { return timeouts_; }
  std::uint64_t resets() const { return resets_; }
  std::size_t outstanding() const { return pending_.size(); }

 private:
  struct Pending {
    Callback done;
    SimTime sent_at = 0;
    netsim::EventId timer = 0;
    netsim::Ipv4Address device;
    netsim::Channel* channel = nullptr;
  };
  struct Link {
    std::shared_ptr<netsim::Channel> channel;
    StreamBuffer buffer;
  };

  std::uint16_t submit(netsim::Ipv4Address device, std::uint8_t unit, const Pdu& pdu, Callback done);
  Link& link_for(netsim::Ipv4Address device);
  void on_bytes(netsim::Ipv4Address device, netsim::Channel* channel,
                const std::vector<std::uint8_t>& bytes);
  void on_reset(netsim::Ipv4Address device, netsim::Channel* channel);
  void abandon(netsim::Ipv4Address device, netsim::Channel* channel);
  void resolve(std::uint16_t tid, Outcome outcome);
  std::uint16_t next_tid();

  netsim::Transport& transport_;
  SimTime timeout_;
  std::uint16_t last_tid_ = 0;
  std::map<std::uint32_t, std::unique_ptr<Link>> links_;
  std::map<std::uint16_t, Pending> pending_;
  std::uint64_t discarded_ = 0;
  std::uint64_t timeouts_ = 0;
  std::uint64_t resets_ = 0;
};

}  // namespace shipcps::modbus
