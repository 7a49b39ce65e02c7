#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>

#include "shipcps/netsim/network.hpp"

namespace shipcps::adversary {

class AttackError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DosSpec {
  netsim::Ipv4Address target;
  std::uint16_t port = 502;
  double rate_pps = 10000.0;
  std::size_t payload_bytes = 500;
  double start_s = 0.0;
  double end_s = 0.0;
  std::uint64_t seed = 0;
  // Stop the controller outright for the window instead of starving it.
  bool hard_crash = false;
};

struct DosStats {
  std::uint64_t planned = 0;
  std::uint64_t sent = 0;
};

void validate(const DosSpec& spec, const netsim::Network& network);

// SYN flood from the attacker host with spoofed sources.
class DosAttack {
 public:
  DosAttack(netsim::Host& attacker, DosSpec spec);
  DosAttack(const DosAttack&) = delete;
  DosAttack& operator=(const DosAttack&) = delete;

  void schedule();
  const DosSpec& spec() const { return spec_; }
  const DosStats& stats() const { return stats_; }

 private:
  void send(std::uint64_t k);
  SimTime time_of(std::uint64_t k) const;

  netsim::Host& attacker_;
  DosSpec spec_;
  DosStats stats_;
};

struct RegisterRewrite {
  std::uint8_t unit_id = 1;
  std::uint16_t first = 0;
  std::uint16_t last = 0;
  std::uint16_t value = 0;
};

struct MitmSpec {
  netsim::Ipv4Address victim_a;  // device on the attacker's LAN
  netsim::Ipv4Address victim_b;  // controller
  RegisterRewrite rewrite;
  double start_s = 0.0;
  double end_s = 0.0;
  double poison_period_s = 1.0;
};

struct MitmStats {
  std::uint64_t poison_frames = 0;
  std::uint64_t relayed = 0;
  std::uint64_t modified = 0;
  std::uint64_t decode_failures = 0;
  std::uint64_t restore_frames = 0;
};

void validate(const MitmSpec& spec, const netsim::Network& network, const netsim::Host& attacker);

// ARP-poisoning relay between a device and whatever carries its traffic to the
// controller (the controller itself on a shared LAN, else the LAN router).
class MitmAttack {
 public:
  MitmAttack(netsim::Host& attacker, MitmSpec spec);
  MitmAttack(const MitmAttack&) = delete;
  MitmAttack& operator=(const MitmAttack&) = delete;

  void schedule();
  const MitmSpec& spec() const { return spec_; }
  const MitmStats& stats() const { return stats_; }
  bool active() const { return active_; }
  // Address the device's peer traffic is poisoned for.
  netsim::Ipv4Address peer() const { return peer_ip_; }

 private:
  void begin();
  void poison();
  void restore();
  void send_arp(netsim::MacAddress to, netsim::Ipv4Address claimed_ip, netsim::MacAddress claimed_mac,
                netsim::Ipv4Address target_ip);
  netsim::TapVerdict relay(netsim::Frame& frame, netsim::TapDirection direction);
  bool rewrite(netsim::IpPacket& packet);

  netsim::Host& attacker_;
  MitmSpec spec_;
  MitmStats stats_;
  netsim::Ipv4Address peer_ip_;
  std::optional<netsim::MacAddress> victim_mac_;
  std::optional<netsim::MacAddress> peer_mac_;
  std::optional<netsim::TapHandle> tap_;
  netsim::EventId next_poison_ = 0;
  bool active_ = false;
  // Start register of read requests seen on the way to the device.
  std::map<std::uint16_t, std::uint16_t> request_address_;
};

}  // namespace shipcps::adversary
