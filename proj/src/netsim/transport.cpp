#include "shipcps/netsim/transport.hpp"

#include <algorithm>

namespace shipcps::netsim {

Channel::Channel(Transport& transport, std::uint16_t local_port, Ipv4Address remote_ip,
                 std::uint16_t remote_port)
    : transport_(transport), local_port_(local_port), remote_ip_(remote_ip), remote_port_(remote_port) {}

SimTime Channel::rto() const {
  const auto& cfg = transport_.config();
  SimTime base = have_srtt_ ? std::max(2 * srtt_, cfg.min_rto) : cfg.min_rto;
  for (std::uint32_t i = 0; i < backoff_ && base < cfg.max_rto; ++i) base *= 2;
  return std::min(base, cfg.max_rto);
}

void Channel::send(const std::vector<std::uint8_t>& bytes) {
  if (!open_) return;
  const std::size_t mss = transport_.config().mss;
  for (std::size_t off = 0; off < bytes.size(); off += mss) {
    const std::size_t n = std::min(mss, bytes.size() - off);
    unsent_.emplace_back(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                         bytes.begin() + static_cast<std::ptrdiff_t>(off + n));
  }
  fill_window();
}

void Channel::close() {
  if (!open_) return;
  reset(false);
}

void Channel::fill_window() {
  while (open_ && !unsent_.empty() && in_flight_.size() < transport_.config().window) {
    const std::uint32_t seq = next_seq_++;
    auto& entry = in_flight_[seq];
    entry.payload = std::move(unsent_.front());
    unsent_.pop_front();
    entry.sent_at = transport_.events().now();
    transmit(seq, entry.payload);
    if (!timer_armed_) arm_timer();
  }
}

void Channel::transmit(std::uint32_t seq, const std::vector<std::uint8_t>& payload) {
  Segment segment;
  segment.src_port = local_port_;
  segment.dst_port = remote_port_;
  segment.seq = seq;
  segment.ack = rcv_next_;
  segment.flags = segment_flags::kAck;
  segment.payload = payload;
  ++segments_sent_;
  transport_.send_segment(remote_ip_, std::move(segment));
}

void Channel::send_ack() {
  Segment segment;
  segment.src_port = local_port_;
  segment.dst_port = remote_port_;
  segment.seq = next_seq_;
  segment.ack = rcv_next_;
  segment.flags = segment_flags::kAck;
  transport_.send_segment(remote_ip_, std::move(segment));
}

void Channel::arm_timer() {
  auto& events = transport_.events();
  if (timer_armed_) events.cancel(timer_);
  timer_armed_ = true;
  std::weak_ptr<Channel> self = weak_from_this();
  timer_ = events.schedule_in(rto(), [self] {
    if (auto channel = self.lock()) {
      channel->timer_armed_ = false;
      channel->on_timeout();
    }
  });
}

void Channel::on_timeout() {
  if (!open_ || in_flight_.empty()) return;
  ++consecutive_timeouts_;
  if (consecutive_timeouts_ >= transport_.config().max_retries) {
    reset(true);
    return;
  }
  ++backoff_;
  // Go-back-N: resend everything outstanding.
  for (auto& [seq, entry] : in_flight_) {
    entry.retransmitted = true;
    entry.sent_at = transport_.events().now();
    ++retransmissions_;
    transmit(seq, entry.payload);
  }
  arm_timer();
}

void Channel::handle(const Segment& segment) {
  if (!open_) return;
  if (segment.flags & segment_flags::kRst) {
    reset(true);
    return;
  }
  // Acknowledgement part.
  if (segment.ack > base_ && segment.ack <= next_seq_) {
    const SimTime now = transport_.events().now();
    for (auto it = in_flight_.begin(); it != in_flight_.end() && it->first < segment.ack;) {
      if (!it->second.retransmitted) {
        const SimTime sample = now - it->second.sent_at;
        if (!have_srtt_) {
          srtt_ = sample;
          have_srtt_ = true;
        } else {
          srtt_ += (sample - srtt_) / 8;
        }
        if (rtt_handler_) rtt_handler_(sample);
      }
      it = in_flight_.erase(it);
    }
    base_ = segment.ack;
    backoff_ = 0;
    consecutive_timeouts_ = 0;
    if (in_flight_.empty()) {
      if (timer_armed_) transport_.events().cancel(timer_);
      timer_armed_ = false;
    } else {
      arm_timer();
    }
    fill_window();
  }
  if (segment.payload.empty()) return;
  if (segment.seq == rcv_next_) {
    ++rcv_next_;
    send_ack();
    // Keep the channel alive across a handler that closes it.
    auto self = shared_from_this();
    if (data_handler_) data_handler_(segment.payload);
  } else {
    send_ack();
  }
}

void Channel::reset(bool notify) {
  open_ = false;
  if (timer_armed_) transport_.events().cancel(timer_);
  timer_armed_ = false;
  in_flight_.clear();
  unsent_.clear();
  auto self = shared_from_this();
  transport_.forget(*this);
  if (notify && reset_handler_) reset_handler_();
}

// ---------------------------------------------------------------- Transport

Transport::Transport(Host& host, TransportConfig config) : host_(host), config_(config) {
  host_.set_ip_handler(IpProtocol::kTcp, [this](const IpPacket& p) { on_segment(p); });
  host_.set_ip_handler(IpProtocol::kUdp, [this](const IpPacket& p) { on_datagram(p); });
}

std::shared_ptr<Channel> Transport::open_channel(Ipv4Address dst, std::uint16_t dst_port) {
  std::uint16_t port = next_ephemeral_;
  while (channels_.contains(Key{port, dst.value, dst_port})) ++port;
  next_ephemeral_ = static_cast<std::uint16_t>(port == 65535 ? 49152 : port + 1);
  auto channel = std::make_shared<Channel>(*this, port, dst, dst_port);
  channels_[Key{port, dst.value, dst_port}] = channel;
  return channel;
}

void Transport::listen(std::uint16_t port, AcceptHandler handler) {
  listeners_[port] = std::move(handler);
}

void Transport::bind_datagram(std::uint16_t port, DatagramHandler handler) {
  datagram_ports_[port] = std::move(handler);
}

void Transport::send_datagram(Ipv4Address dst, std::uint16_t dst_port, std::uint16_t src_port,
                              const std::vector<std::uint8_t>& bytes) {
  IpPacket packet;
  packet.src = host_.ip();
  packet.dst = dst;
  packet.protocol = IpProtocol::kUdp;
  packet.segment.src_port = src_port;
  packet.segment.dst_port = dst_port;
  packet.segment.payload = bytes;
  host_.send_ip(std::move(packet));
}

void Transport::send_segment(Ipv4Address dst, Segment segment) {
  IpPacket packet;
  packet.src = host_.ip();
  packet.dst = dst;
  packet.protocol = IpProtocol::kTcp;
  packet.segment = std::move(segment);
  host_.send_ip(std::move(packet));
}

void Transport::forget(const Channel& channel) {
  auto it = channels_.find(Key{channel.local_port_, channel.remote_ip_.value, channel.remote_port_});
  if (it != channels_.end() && it->second.get() == &channel) channels_.erase(it);
}

void Transport::on_datagram(const IpPacket& packet) {
  auto it = datagram_ports_.find(packet.segment.dst_port);
  if (it == datagram_ports_.end()) {
    ++dropped_segments_;
    return;
  }
  it->second(packet.src, packet.segment.src_port, packet.segment.payload);
}

void Transport::on_segment(const IpPacket& packet) {
  const Segment& segment = packet.segment;
  const Key key{segment.dst_port, packet.src.value, segment.src_port};
  if (auto it = channels_.find(key); it != channels_.end()) {
    auto channel = it->second;
    channel->handle(segment);
    return;
  }
  // Unknown connection. Bare SYNs have no handshake to answer and are ignored.
  if ((segment.flags & segment_flags::kRst) || segment.flags == segment_flags::kSyn) {
    ++dropped_segments_;
    return;
  }
  auto listener = listeners_.find(segment.dst_port);
  if (listener != listeners_.end() && segment.seq == 0 && !segment.payload.empty()) {
    auto channel = std::make_shared<Channel>(*this, segment.dst_port, packet.src, segment.src_port);
    channels_[key] = channel;
    listener->second(channel);
    channel->handle(segment);
    return;
  }
  ++dropped_segments_;
  ++resets_sent_;
  Segment rst;
  rst.src_port = segment.dst_port;
  rst.dst_port = segment.src_port;
  rst.seq = segment.ack;
  rst.flags = segment_flags::kRst;
  send_segment(packet.src, std::move(rst));
}

}  // namespace shipcps::netsim
