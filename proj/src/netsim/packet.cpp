#include "shipcps/netsim/packet.hpp"

#include <charconv>
#include <cstdio>

namespace shipcps::netsim {

MacAddress MacAddress::broadcast() {
  MacAddress mac;
  mac.bytes.fill(0xFF);
  return mac;
}

MacAddress MacAddress::from_index(std::uint32_t index) {
  MacAddress mac;
  mac.bytes = {0x02, 0x00,
               static_cast<std::uint8_t>(index >> 24), static_cast<std::uint8_t>(index >> 16),
               static_cast<std::uint8_t>(index >> 8), static_cast<std::uint8_t>(index)};
  return mac;
}

std::string MacAddress::str() const {
  char buf[18];
  std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", bytes[0], bytes[1], bytes[2],
                bytes[3], bytes[4], bytes[5]);
  return buf;
}

Ipv4Address Ipv4Address::from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c,
                                     std::uint8_t d) {
  return Ipv4Address{(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) |
                     (std::uint32_t{c} << 8) | std::uint32_t{d}};
}

std::optional<Ipv4Address> Ipv4Address::parse(std::string_view text) {
  std::uint32_t value = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int octet = 0; octet < 4; ++octet) {
    unsigned part = 0;
    auto [next, ec] = std::from_chars(p, end, part);
    if (ec != std::errc{} || part > 255 || next == p) return std::nullopt;
    value = (value << 8) | part;
    p = next;
    if (octet < 3) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return Ipv4Address{value};
}

std::string Ipv4Address::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", value >> 24, (value >> 16) & 0xFF,
                (value >> 8) & 0xFF, value & 0xFF);
  return buf;
}

std::size_t Frame::size_bytes() const {
  if (const auto* packet = ip()) return kHeaderOverheadBytes + packet->segment.payload_size();
  return kHeaderOverheadBytes;
}

}  // namespace shipcps::netsim
