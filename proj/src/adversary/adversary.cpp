#include "shipcps/adversary/adversary.hpp"

#include <cmath>
#include <string>

#include "shipcps/modbus/codec.hpp"

namespace shipcps::adversary {

using netsim::ArpMessage;
using netsim::Frame;
using netsim::Host;
using netsim::Ipv4Address;
using netsim::MacAddress;

namespace {

const Host* find_by_ip(const netsim::Network& network, Ipv4Address ip) {
  for (const auto& h : network.hosts()) {
    if (h->ip() == ip) return h.get();
  }
  return nullptr;
}

void check_window(const std::string& what, double start, double end) {
  if (!(start >= 0.0)) throw AttackError(what + ": window start must be >= 0");
  if (!(end > start)) throw AttackError(what + ": window end before start");
}

}  // namespace

// ---------------------------------------------------------------- DoS

void validate(const DosSpec& spec, const netsim::Network& network) {
  check_window("dos", spec.start_s, spec.end_s);
  if (!(spec.rate_pps > 0.0)) throw AttackError("dos: rate must be > 0");
  if (find_by_ip(network, spec.target) == nullptr) {
    throw AttackError("dos: no host at target " + spec.target.str());
  }
}

DosAttack::DosAttack(Host& attacker, DosSpec spec) : attacker_(attacker), spec_(spec) {
  validate(spec_, attacker_.network());
  stats_.planned = static_cast<std::uint64_t>(std::llround(spec_.rate_pps * (spec_.end_s - spec_.start_s)));
}

SimTime DosAttack::time_of(std::uint64_t k) const {
  return from_seconds(spec_.start_s) + static_cast<SimTime>(std::llround(static_cast<double>(k) * 1e9 / spec_.rate_pps));
}

void DosAttack::schedule() {
  if (stats_.planned == 0) return;
  auto& events = attacker_.network().events();
  events.schedule_at(std::max(events.now(), time_of(0)), [this] { send(0); });
}

void DosAttack::send(std::uint64_t k) {
  const std::uint64_t h = netsim::splitmix64(spec_.seed ^ netsim::splitmix64(k + 1));
  netsim::IpPacket p;
  // Spoofed sources in 198.18.0.0/15, outside every simulated subnet.
  p.src = Ipv4Address::from_octets(198, static_cast<std::uint8_t>(18 + ((h >> 16) & 1)),
                                   static_cast<std::uint8_t>(h >> 8), static_cast<std::uint8_t>(h));
  p.dst = spec_.target;
  p.protocol = netsim::IpProtocol::kTcp;
  p.segment.src_port = static_cast<std::uint16_t>(1024 + (h >> 24) % 64512);
  p.segment.dst_port = spec_.port;
  p.segment.seq = static_cast<std::uint32_t>(h >> 32);
  p.segment.flags = netsim::segment_flags::kSyn;
  p.segment.opaque_bytes = static_cast<std::uint32_t>(spec_.payload_bytes);
  attacker_.send_ip(std::move(p));
  ++stats_.sent;
  if (k + 1 < stats_.planned) {
    attacker_.network().events().schedule_at(time_of(k + 1), [this, k] { send(k + 1); });
  }
}

// ---------------------------------------------------------------- MITM

void validate(const MitmSpec& spec, const netsim::Network& network, const Host& attacker) {
  check_window("mitm", spec.start_s, spec.end_s);
  if (!(spec.poison_period_s > 0.0)) throw AttackError("mitm: poison period must be > 0");
  if (spec.rewrite.first > spec.rewrite.last) throw AttackError("mitm: register range reversed");
  if (find_by_ip(network, spec.victim_a) == nullptr) {
    throw AttackError("mitm: no host at victim " + spec.victim_a.str());
  }
  if (find_by_ip(network, spec.victim_b) == nullptr) {
    throw AttackError("mitm: no host at victim " + spec.victim_b.str());
  }
  if (spec.victim_a.subnet24() != attacker.ip().subnet24()) {
    throw AttackError("mitm: victim " + spec.victim_a.str() + " is not on the attacker's LAN");
  }
}

MitmAttack::MitmAttack(Host& attacker, MitmSpec spec) : attacker_(attacker), spec_(spec) {
  validate(spec_, attacker_.network(), attacker_);
  peer_ip_ = spec_.victim_b.subnet24() == attacker_.ip().subnet24()
                 ? spec_.victim_b
                 : netsim::lan_gateway_address(attacker_.lan());
}

void MitmAttack::schedule() {
  auto& events = attacker_.network().events();
  events.schedule_at(std::max(events.now(), from_seconds(spec_.start_s)), [this] { begin(); });
  events.schedule_at(std::max(events.now(), from_seconds(spec_.end_s)), [this] { restore(); });
}

void MitmAttack::begin() {
  active_ = true;
  tap_ = attacker_.add_intercept_tap([this](Frame& f, netsim::TapDirection d) { return relay(f, d); });
  poison();
}

void MitmAttack::poison() {
  if (!active_) return;
  // Learn the true addresses first; poisoning before that would blackhole traffic.
  if (!victim_mac_) {
    attacker_.arp_resolve(spec_.victim_a, [this](std::optional<MacAddress> m) {
      if (m) victim_mac_ = *m;
    });
  }
  if (!peer_mac_) {
    attacker_.arp_resolve(peer_ip_, [this](std::optional<MacAddress> m) {
      if (m) peer_mac_ = *m;
    });
  }
  if (victim_mac_ && peer_mac_) {
    send_arp(*victim_mac_, peer_ip_, attacker_.mac(), spec_.victim_a);
    send_arp(*peer_mac_, spec_.victim_a, attacker_.mac(), peer_ip_);
    stats_.poison_frames += 2;
  }
  auto& events = attacker_.network().events();
  const SimTime period = victim_mac_ && peer_mac_ ? from_seconds(spec_.poison_period_s)
                                                  : std::min(from_seconds(spec_.poison_period_s), millis(10));
  next_poison_ = events.schedule_in(period, [this] { poison(); });
}

void MitmAttack::restore() {
  if (!active_) return;
  active_ = false;
  auto& events = attacker_.network().events();
  events.cancel(next_poison_);
  if (tap_) attacker_.remove_tap(*tap_);
  tap_.reset();
  if (victim_mac_ && peer_mac_) {
    send_arp(*victim_mac_, peer_ip_, *peer_mac_, spec_.victim_a);
    send_arp(*peer_mac_, spec_.victim_a, *victim_mac_, peer_ip_);
    stats_.restore_frames += 2;
  }
}

void MitmAttack::send_arp(MacAddress to, Ipv4Address claimed_ip, MacAddress claimed_mac, Ipv4Address target_ip) {
  Frame f;
  f.src = attacker_.mac();
  f.dst = to;
  f.ethertype = netsim::EtherType::kArp;
  f.payload = ArpMessage{ArpMessage::Op::kReply, claimed_mac, claimed_ip, to, target_ip};
  attacker_.send_frame(std::move(f));
}

netsim::TapVerdict MitmAttack::relay(Frame& frame, netsim::TapDirection direction) {
  if (direction != netsim::TapDirection::kIngress) return netsim::TapVerdict::kPass;
  auto* packet = frame.ip();
  if (packet == nullptr || frame.dst != attacker_.mac() || packet->dst == attacker_.ip()) {
    return netsim::TapVerdict::kPass;
  }
  std::optional<MacAddress> next;
  if (packet->dst == spec_.victim_a) {
    next = victim_mac_;
  } else if (packet->src == spec_.victim_a) {
    next = peer_mac_;
  }
  if (!next) return netsim::TapVerdict::kPass;
  Frame out = frame;
  const bool modified = rewrite(*out.ip());
  out.src = attacker_.mac();
  out.dst = *next;
  ++stats_.relayed;
  if (modified) ++stats_.modified;
  attacker_.send_frame(std::move(out), modified ? netsim::Disposition::kModified : netsim::Disposition::kDelivered);
  return netsim::TapVerdict::kDrop;
}

bool MitmAttack::rewrite(netsim::IpPacket& packet) {
  auto& seg = packet.segment;
  if (seg.payload.empty()) return false;
  if (packet.dst == spec_.victim_a && seg.dst_port == modbus::kPort) {
    auto decoded = modbus::decode_request(seg.payload);
    if (const auto* adu = std::get_if<modbus::Adu>(&decoded)) {
      request_address_[adu->header.transaction_id] = adu->pdu.address;
    } else {
      ++stats_.decode_failures;
    }
    return false;
  }
  if (packet.src != spec_.victim_a || seg.src_port != modbus::kPort) return false;
  auto decoded = modbus::decode_response(seg.payload);
  auto* adu = std::get_if<modbus::Adu>(&decoded);
  if (adu == nullptr) {
    ++stats_.decode_failures;
    return false;
  }
  const auto fn = adu->pdu.function;
  if (adu->header.unit_id != spec_.rewrite.unit_id || adu->pdu.is_exception() ||
      (fn != modbus::function::kReadHolding && fn != modbus::function::kReadInput)) {
    return false;
  }
  // Unsolicited reports (transaction 0) always start at register 0.
  std::uint16_t base = 0;
  if (auto it = request_address_.find(adu->header.transaction_id); it != request_address_.end()) {
    base = it->second;
  }
  bool changed = false;
  auto& values = adu->pdu.values;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const std::size_t reg = base + k;
    if (reg < spec_.rewrite.first || reg > spec_.rewrite.last) continue;
    if (values[k] != spec_.rewrite.value) {
      values[k] = spec_.rewrite.value;
      changed = true;
    }
  }
  if (!changed) return false;
  seg.payload = modbus::encode_adu(*adu);
  return true;
}

}  // namespace shipcps::adversary
