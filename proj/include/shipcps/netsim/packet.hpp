#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace shipcps::netsim {

struct MacAddress {
  std::array<std::uint8_t, 6> bytes{};

  static MacAddress broadcast();
  // Locally administered address derived from a 32-bit node number.
  static MacAddress from_index(std::uint32_t index);

  bool is_broadcast() const { return *this == broadcast(); }
  std::string str() const;

  auto operator<=>(const MacAddress&) const = default;
};

struct Ipv4Address {
  std::uint32_t value = 0;

  static Ipv4Address from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d);
  static std::optional<Ipv4Address> parse(std::string_view text);

  std::string str() const;
  // /24 subnet the address belongs to.
  std::uint32_t subnet24() const { return value & 0xFFFFFF00u; }

  auto operator<=>(const Ipv4Address&) const = default;
};

// Combined Ethernet + IPv4 + transport header overhead charged to every frame.
inline constexpr std::size_t kHeaderOverheadBytes = 54;

enum class EtherType : std::uint16_t { kIpv4 = 0x0800, kArp = 0x0806 };
enum class IpProtocol : std::uint8_t { kTcp = 6, kUdp = 17 };

namespace segment_flags {
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace segment_flags

struct Segment {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  std::vector<std::uint8_t> payload;
  // Filler bytes that count toward the wire size but are never materialized
  // (bulk flood traffic).
  std::uint32_t opaque_bytes = 0;

  std::size_t payload_size() const { return payload.size() + opaque_bytes; }
};

struct IpPacket {
  Ipv4Address src;
  Ipv4Address dst;
  IpProtocol protocol = IpProtocol::kTcp;
  std::uint8_t ttl = 64;
  Segment segment;
};

struct ArpMessage {
  enum class Op : std::uint16_t { kRequest = 1, kReply = 2 };
  Op op = Op::kRequest;
  MacAddress sender_mac;
  Ipv4Address sender_ip;
  MacAddress target_mac;
  Ipv4Address target_ip;
};

struct Frame {
  MacAddress src;
  MacAddress dst;
  EtherType ethertype = EtherType::kIpv4;
  std::variant<IpPacket, ArpMessage> payload;
  // Stable identity assigned at origin; copies made by flooding share it.
  std::uint64_t id = 0;

  std::size_t size_bytes() const;
  const IpPacket* ip() const { return std::get_if<IpPacket>(&payload); }
  IpPacket* ip() { return std::get_if<IpPacket>(&payload); }
  const ArpMessage* arp() const { return std::get_if<ArpMessage>(&payload); }
};

}  // namespace shipcps::netsim
