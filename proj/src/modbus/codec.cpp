#include "shipcps/modbus/codec.hpp"

namespace shipcps::modbus {

namespace {

constexpr std::size_t kMbapSize = 7;
// Largest PDU allowed by the protocol plus the unit id.
constexpr std::uint16_t kMaxLength = 254;

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

std::uint16_t get16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

DecodeError fail(DecodeErrorKind kind, std::optional<MbapHeader> header, std::string detail) {
  return DecodeError{kind, header, std::move(detail)};
}

// Parses and checks the MBAP; on success `body` is the PDU without the
// function byte.
std::variant<MbapHeader, DecodeError> parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMbapSize + 1) {
    return fail(DecodeErrorKind::kTruncated, std::nullopt, "need at least 8 bytes");
  }
  MbapHeader h;
  h.transaction_id = get16(bytes, 0);
  h.protocol_id = get16(bytes, 2);
  h.length = get16(bytes, 4);
  h.unit_id = bytes[6];
  if (h.protocol_id != 0) return fail(DecodeErrorKind::kBadProtocolId, h, "protocol id must be 0");
  if (h.length < 2) return fail(DecodeErrorKind::kLengthMismatch, h, "length below minimum");
  const std::size_t declared = 6 + static_cast<std::size_t>(h.length);
  if (bytes.size() < declared) return fail(DecodeErrorKind::kTruncated, h, "frame shorter than length");
  if (bytes.size() > declared) {
    return fail(DecodeErrorKind::kLengthMismatch, h, "trailing bytes after length");
  }
  return h;
}

}  // namespace

std::string_view to_string(DecodeErrorKind kind) {
  switch (kind) {
    case DecodeErrorKind::kTruncated: return "Truncated";
    case DecodeErrorKind::kBadProtocolId: return "BadProtocolId";
    case DecodeErrorKind::kLengthMismatch: return "LengthMismatch";
    case DecodeErrorKind::kIllegalFunction: return "IllegalFunction";
    case DecodeErrorKind::kMalformedPdu: return "MalformedPdu";
  }
  return "unknown";
}

Pdu read_request(std::uint8_t fn, std::uint16_t address, std::uint16_t quantity) {
  Pdu p;
  p.function = fn;
  p.address = address;
  p.quantity = quantity;
  return p;
}

Pdu read_response(std::uint8_t fn, std::vector<std::uint16_t> values) {
  Pdu p;
  p.function = fn;
  p.values = std::move(values);
  return p;
}

Pdu write_request(std::uint16_t address, std::vector<std::uint16_t> values) {
  Pdu p;
  p.function = function::kWriteMultiple;
  p.address = address;
  p.quantity = static_cast<std::uint16_t>(values.size());
  p.values = std::move(values);
  return p;
}

Pdu write_response(std::uint16_t address, std::uint16_t quantity) {
  Pdu p;
  p.function = function::kWriteMultiple;
  p.address = address;
  p.quantity = quantity;
  return p;
}

Pdu exception_response(std::uint8_t fn, std::uint8_t code) {
  Pdu p;
  p.function = static_cast<std::uint8_t>(fn | function::kExceptionBit);
  p.exception = code;
  return p;
}

std::vector<std::uint8_t> encode_adu(std::uint16_t transaction_id, std::uint8_t unit_id,
                                     const Pdu& pdu) {
  std::vector<std::uint8_t> body;
  body.push_back(pdu.function);
  if (pdu.is_exception()) {
    body.push_back(pdu.exception);
  } else if (pdu.function == function::kWriteMultiple && !pdu.values.empty()) {
    put16(body, pdu.address);
    put16(body, pdu.quantity);
    body.push_back(static_cast<std::uint8_t>(2 * pdu.values.size()));
    for (auto v : pdu.values) put16(body, v);
  } else if (!pdu.values.empty()) {
    body.push_back(static_cast<std::uint8_t>(2 * pdu.values.size()));
    for (auto v : pdu.values) put16(body, v);
  } else {
    put16(body, pdu.address);
    put16(body, pdu.quantity);
  }
  std::vector<std::uint8_t> out;
  out.reserve(kMbapSize + body.size());
  put16(out, transaction_id);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(body.size() + 1));
  out.push_back(unit_id);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::vector<std::uint8_t> encode_adu(const Adu& adu) {
  return encode_adu(adu.header.transaction_id, adu.header.unit_id, adu.pdu);
}

DecodeResult decode_request(std::span<const std::uint8_t> bytes) {
  auto parsed = parse_header(bytes);
  if (auto* e = std::get_if<DecodeError>(&parsed)) return *e;
  const MbapHeader h = std::get<MbapHeader>(parsed);
  const auto body = bytes.subspan(kMbapSize + 1);
  Adu adu{h, {}};
  adu.pdu.function = bytes[kMbapSize];
  switch (adu.pdu.function) {
    case function::kReadHolding:
    case function::kReadInput:
      if (body.size() != 4) return fail(DecodeErrorKind::kMalformedPdu, h, "read request is 4 bytes");
      adu.pdu.address = get16(body, 0);
      adu.pdu.quantity = get16(body, 2);
      return adu;
    case function::kWriteMultiple: {
      if (body.size() < 5) return fail(DecodeErrorKind::kMalformedPdu, h, "write request too short");
      adu.pdu.address = get16(body, 0);
      adu.pdu.quantity = get16(body, 2);
      const std::size_t count = body[4];
      if (count != 2u * adu.pdu.quantity || body.size() != 5 + count || count == 0) {
        return fail(DecodeErrorKind::kMalformedPdu, h, "byte count disagrees with quantity");
      }
      for (std::size_t i = 0; i < count; i += 2) adu.pdu.values.push_back(get16(body, 5 + i));
      return adu;
    }
    default:
      return fail(DecodeErrorKind::kIllegalFunction, h,
                  "unsupported function " + std::to_string(adu.pdu.function));
  }
}

DecodeResult decode_response(std::span<const std::uint8_t> bytes) {
  auto parsed = parse_header(bytes);
  if (auto* e = std::get_if<DecodeError>(&parsed)) return *e;
  const MbapHeader h = std::get<MbapHeader>(parsed);
  const auto body = bytes.subspan(kMbapSize + 1);
  Adu adu{h, {}};
  adu.pdu.function = bytes[kMbapSize];
  if (adu.pdu.is_exception()) {
    if (body.size() != 1) return fail(DecodeErrorKind::kMalformedPdu, h, "exception body is 1 byte");
    adu.pdu.exception = body[0];
    return adu;
  }
  switch (adu.pdu.function) {
    case function::kReadHolding:
    case function::kReadInput: {
      if (body.empty()) return fail(DecodeErrorKind::kMalformedPdu, h, "missing byte count");
      const std::size_t count = body[0];
      if (count == 0 || count % 2 != 0 || body.size() != 1 + count) {
        return fail(DecodeErrorKind::kMalformedPdu, h, "bad byte count");
      }
      for (std::size_t i = 0; i < count; i += 2) adu.pdu.values.push_back(get16(body, 1 + i));
      return adu;
    }
    case function::kWriteMultiple:
      if (body.size() != 4) return fail(DecodeErrorKind::kMalformedPdu, h, "write response is 4 bytes");
      adu.pdu.address = get16(body, 0);
      adu.pdu.quantity = get16(body, 2);
      return adu;
    default:
      return fail(DecodeErrorKind::kIllegalFunction, h,
                  "unsupported function " + std::to_string(adu.pdu.function));
  }
}

void StreamBuffer::append(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<std::vector<std::uint8_t>> StreamBuffer::next() {
  if (buffer_.size() < 6) return std::nullopt;
  const std::uint16_t length = static_cast<std::uint16_t>((buffer_[4] << 8) | buffer_[5]);
  if (length < 2 || length > kMaxLength) {
    discarded_ += buffer_.size();
    buffer_.clear();
    return std::nullopt;
  }
  const std::size_t total = 6 + static_cast<std::size_t>(length);
  if (buffer_.size() < total) return std::nullopt;
  std::vector<std::uint8_t> frame(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
  return frame;
}

}  // namespace shipcps::modbus
