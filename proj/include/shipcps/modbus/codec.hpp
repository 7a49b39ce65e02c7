#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace shipcps::modbus {

inline constexpr std::uint16_t kPort = 502;

namespace function {
inline constexpr std::uint8_t kReadHolding = 0x03;
inline constexpr std::uint8_t kReadInput = 0x04;
inline constexpr std::uint8_t kWriteMultiple = 0x10;
inline constexpr std::uint8_t kExceptionBit = 0x80;
}  // namespace function

namespace exception_code {
inline constexpr std::uint8_t kIllegalFunction = 0x01;
inline constexpr std::uint8_t kIllegalAddress = 0x02;
inline constexpr std::uint8_t kIllegalValue = 0x03;
}  // namespace exception_code

inline constexpr std::uint16_t kMaxReadQuantity = 125;
inline constexpr std::uint16_t kMaxWriteQuantity = 123;

struct MbapHeader {
  std::uint16_t transaction_id = 0;
  std::uint16_t protocol_id = 0;
  std::uint16_t length = 0;  // unit id + PDU bytes
  std::uint8_t unit_id = 0;

  bool operator==(const MbapHeader&) const = default;
};

// One PDU shape covers every supported request and response. Fields not used
// by a given function stay zero/empty.
//   read request:   address, quantity
//   read response:  values
//   write request:  address, quantity (= values.size()), values
//   write response: address, quantity
//   exception:      function | 0x80, exception
struct Pdu {
  std::uint8_t function = 0;
  std::uint16_t address = 0;
  std::uint16_t quantity = 0;
  std::vector<std::uint16_t> values;
  std::uint8_t exception = 0;

  bool is_exception() const { return (function & function::kExceptionBit) != 0; }
  bool operator==(const Pdu&) const = default;
};

struct Adu {
  MbapHeader header;
  Pdu pdu;

  bool operator==(const Adu&) const = default;
};

enum class DecodeErrorKind { kTruncated, kBadProtocolId, kLengthMismatch, kIllegalFunction, kMalformedPdu };

std::string_view to_string(DecodeErrorKind kind);

struct DecodeError {
  DecodeErrorKind kind;
  std::optional<MbapHeader> header;  // present once the MBAP parsed
  std::string detail;
};

using DecodeResult = std::variant<Adu, DecodeError>;

Pdu read_request(std::uint8_t function, std::uint16_t address, std::uint16_t quantity);
Pdu read_response(std::uint8_t function, std::vector<std::uint16_t> values);
Pdu write_request(std::uint16_t address, std::vector<std::uint16_t> values);
Pdu write_response(std::uint16_t address, std::uint16_t quantity);
Pdu exception_response(std::uint8_t function, std::uint8_t code);

// Header length is recomputed from the PDU.
std::vector<std::uint8_t> encode_adu(std::uint16_t transaction_id, std::uint8_t unit_id, const Pdu& pdu);
std::vector<std::uint8_t> encode_adu(const Adu& adu);

DecodeResult decode_request(std::span<const std::uint8_t> bytes);
DecodeResult decode_response(std::span<const std::uint8_t> bytes);

// Splits a byte stream into ADU-sized chunks using the MBAP length field.
class StreamBuffer {
 public:
  void append(std::span<const std::uint8_t> bytes);
  // Next complete frame, if any. A length field that can never be valid
  // discards the buffer.
  std::optional<std::vector<std::uint8_t>> next();
  std::size_t buffered() const { return buffer_.size(); }
  std::uint64_t discarded() const { return discarded_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::uint64_t discarded_ = 0;
};

}  // namespace shipcps::modbus
