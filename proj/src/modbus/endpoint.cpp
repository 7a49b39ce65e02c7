#include "shipcps/modbus/endpoint.hpp"

#include <algorithm>

namespace shipcps::modbus {

using netsim::Channel;
using netsim::Ipv4Address;

// ---------------------------------------------------------------- Gateway

Gateway::Gateway(netsim::Transport& transport, plant::Plant& plant, DeviceLayout layout,
                 GatewayConfig config)
    : transport_(transport), plant_(plant), layout_(std::move(layout)), config_(config) {
  if (config_.period <= 0) throw std::invalid_argument("reporting period must be positive");
  for (std::size_t k = 0; k < layout_.loads.size(); ++k) registers_.holding[k] = 1000;
  write_measurements(layout_, plant_.read_measurements(), registers_);
}

void Gateway::start() {
  if (started_) return;
  started_ = true;
  transport_.listen(kPort, [this](const std::shared_ptr<Channel>& channel) {
    auto session = std::make_unique<Session>();
    session->channel = channel;
    Session* raw = session.get();
    Channel* key = channel.get();
    sessions_[key] = std::move(session);
    channel->on_data([this, raw](const std::vector<std::uint8_t>& bytes) { on_bytes(*raw, bytes); });
    channel->on_reset([this, key] { sessions_.erase(key); });
  });
  schedule_refresh(transport_.events().now() + config_.phase);
}

void Gateway::schedule_refresh(SimTime at) {
  next_refresh_ = transport_.events().schedule_at(at, [this] {
    refresh();
    schedule_refresh(transport_.events().now() + config_.period);
  });
}

void Gateway::set_period(SimTime period) {
  if (period <= 0) throw std::invalid_argument("reporting period must be positive");
  config_.period = period;
  if (!started_) return;
  transport_.events().cancel(next_refresh_);
  schedule_refresh(transport_.events().now() + period);
}

void Gateway::refresh() {
  ++refreshes_;
  write_measurements(layout_, plant_.read_measurements(), registers_);
  if (!config_.publish) return;
  ++reports_sent_;
  const auto bytes =
      encode_adu(0, layout_.unit_id, read_response(function::kReadInput, registers_.input));
  transport_.send_datagram(config_.report_to, kPort, kPort, bytes);
}

Pdu Gateway::handle(const Pdu& request) {
  ++requests_served_;
  Pdu response = serve(registers_, request);
  if (response.is_exception()) {
    ++exceptions_sent_;
    return response;
  }
  if (request.function == function::kWriteMultiple) {
    for (std::size_t r = request.address; r < request.address + request.quantity; ++r) {
      if (r >= layout_.loads.size()) continue;
      const double status = std::min(1.0, decode_permille(registers_.holding[r]));
      plant_.apply_command(layout_.loads[r], status);
    }
  }
  return response;
}

void Gateway::on_bytes(Session& session, const std::vector<std::uint8_t>& bytes) {
  session.buffer.append(bytes);
  while (auto frame = session.buffer.next()) {
    auto decoded = decode_request(*frame);
    if (auto* adu = std::get_if<Adu>(&decoded)) {
      const Pdu response = handle(adu->pdu);
      session.channel->send(encode_adu(adu->header.transaction_id, adu->header.unit_id, response));
      continue;
    }
    const auto& error = std::get<DecodeError>(decoded);
    if (!error.header || frame->size() < 8) continue;
    std::uint8_t code = 0;
    if (error.kind == DecodeErrorKind::kIllegalFunction) code = exception_code::kIllegalFunction;
    if (error.kind == DecodeErrorKind::kMalformedPdu) code = exception_code::kIllegalValue;
    if (code == 0) continue;
    ++exceptions_sent_;
    session.channel->send(encode_adu(error.header->transaction_id, error.header->unit_id,
                                     exception_response((*frame)[7], code)));
  }
}

// ---------------------------------------------------------------- Master

std::string_view to_string(Outcome::Kind kind) {
  switch (kind) {
    case Outcome::Kind::kValues: return "values";
    case Outcome::Kind::kWriteAck: return "write_ack";
    case Outcome::Kind::kTimeout: return "timeout";
    case Outcome::Kind::kChannelReset: return "channel_reset";
    case Outcome::Kind::kException: return "exception";
  }
  return "unknown";
}

Master::Master(netsim::Transport& transport, SimTime timeout)
    : transport_(transport), timeout_(timeout) {}

void Master::on_report(ReportHandler handler) {
  transport_.bind_datagram(kPort, [handler = std::move(handler)](Ipv4Address src, std::uint16_t,
                                                                 const std::vector<std::uint8_t>& b) {
    auto decoded = decode_response(b);
    if (auto* adu = std::get_if<Adu>(&decoded)) handler(src, *adu);
  });
}

std::uint16_t Master::next_tid() {
  last_tid_ = static_cast<std::uint16_t>(last_tid_ + 1);
  if (last_tid_ == 0) last_tid_ = 1;  // 0 marks unsolicited reports
  return last_tid_;
}

Master::Link& Master::link_for(Ipv4Address device) {
  auto& slot = links_[device.value];
  if (slot && slot->channel->open()) return *slot;
  slot = std::make_unique<Link>();
  slot->channel = transport_.open_channel(device, kPort);
  Channel* raw = slot->channel.get();
  slot->channel->on_data([this, device, raw](const std::vector<std::uint8_t>& bytes) {
    on_bytes(device, raw, bytes);
  });
  slot->channel->on_reset([this, device, raw] { on_reset(device, raw); });
  return *slot;
}

std::uint16_t Master::read(Ipv4Address device, std::uint8_t unit, std::uint8_t fn,
                           std::uint16_t address, std::uint16_t quantity, Callback done) {
  return submit(device, unit, read_request(fn, address, quantity), std::move(done));
}

std::uint16_t Master::write(Ipv4Address device, std::uint8_t unit, std::uint16_t address,
                            std::vector<std::uint16_t> values, Callback done) {
  return submit(device, unit, write_request(address, std::move(values)), std::move(done));
}

std::uint16_t Master::submit(Ipv4Address device, std::uint8_t unit, const Pdu& pdu, Callback done) {
  const std::uint16_t tid = next_tid();
  Link& link = link_for(device);
  Pending p;
  p.done = std::move(done);
  p.sent_at = transport_.events().now();
  p.device = device;
  p.channel = link.channel.get();
  p.timer = transport_.events().schedule_in(timeout_, [this, tid] {
    auto it = pending_.find(tid);
    if (it == pending_.end()) return;
    ++timeouts_;
    Outcome o;
    o.kind = Outcome::Kind::kTimeout;
    o.transaction_id = tid;
    o.sent_at = it->second.sent_at;
    o.age = transport_.events().now() - it->second.sent_at;
    const Ipv4Address device = it->second.device;
    Channel* channel = it->second.channel;
    resolve(tid, std::move(o));
    // A fresh channel avoids queueing the next request behind a backlog of
    // retransmissions.
    abandon(device, channel);
  });
  pending_[tid] = std::move(p);
  link.channel->send(encode_adu(tid, unit, pdu));
  return tid;
}

void Master::resolve(std::uint16_t tid, Outcome outcome) {
  auto it = pending_.find(tid);
  if (it == pending_.end()) return;
  Pending p = std::move(it->second);
  pending_.erase(it);
  transport_.events().cancel(p.timer);
  if (p.done) p.done(outcome);
}

void Master::abandon(Ipv4Address device, Channel* channel) {
  auto it = links_.find(device.value);
  if (it == links_.end() || it->second->channel.get() != channel) return;
  auto link = std::move(it->second);
  links_.erase(it);
  link->channel->close();
}

void Master::on_bytes(Ipv4Address, Channel* channel, const std::vector<std::uint8_t>& bytes) {
  Link* link = nullptr;
  for (auto& [ip, l] : links_) {
    if (l->channel.get() == channel) link = l.get();
  }
  if (link == nullptr) return;
  link->buffer.append(bytes);
  // Drain first: callbacks below may drop this link.
  std::vector<std::vector<std::uint8_t>> frames;
  while (auto frame = link->buffer.next()) frames.push_back(std::move(*frame));
  for (const auto& frame : frames) {
    auto decoded = decode_response(frame);
    const auto* adu = std::get_if<Adu>(&decoded);
    if (adu == nullptr) {
      ++discarded_;
      continue;
    }
    auto it = pending_.find(adu->header.transaction_id);
    if (it == pending_.end() || it->second.channel != channel) {
      ++discarded_;
      continue;
    }
    Outcome o;
    o.transaction_id = adu->header.transaction_id;
    o.sent_at = it->second.sent_at;
    o.age = transport_.events().now() - it->second.sent_at;
    if (adu->pdu.is_exception()) {
      o.kind = Outcome::Kind::kException;
      o.exception = adu->pdu.exception;
    } else if (adu->pdu.function == function::kWriteMultiple) {
      o.kind = Outcome::Kind::kWriteAck;
    } else {
      o.kind = Outcome::Kind::kValues;
      o.values = adu->pdu.values;
    }
    resolve(o.transaction_id, std::move(o));
  }
}

void Master::on_reset(Ipv4Address device, Channel* channel) {
  ++resets_;
  std::vector<std::uint16_t> affected;
  for (const auto& [tid, p] : pending_) {
    if (p.channel == channel) affected.push_back(tid);
  }
  auto it = links_.find(device.value);
  if (it != links_.end() && it->second->channel.get() == channel) links_.erase(it);
  for (auto tid : affected) {
    auto found = pending_.find(tid);
    Outcome o;
    o.kind = Outcome::Kind::kChannelReset;
    o.transaction_id = tid;
    o.sent_at = found->second.sent_at;
    o.age = transport_.events().now() - found->second.sent_at;
    resolve(tid, std::move(o));
  }
}

}  // namespace shipcps::modbus
