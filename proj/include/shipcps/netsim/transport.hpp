#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <tuple>
#include <vector>

#include "shipcps/netsim/network.hpp"

namespace shipcps::netsim {

struct TransportConfig {
  std::uint32_t window = 4;  // segments in flight
  SimTime min_rto = millis(200);
  SimTime max_rto = millis(2000);
  std::uint32_t max_retries = 8;  // consecutive timeouts before reset
  std::size_t mss = 1460;
};

class Transport;

// One end of a reliable, ordered segment stream. Go-back-N with a fixed
// window and cumulative acks; no handshake, the first data segment opens the
// passive side.
class Channel : public std::enable_shared_from_this<Channel> {
 public:
  using DataHandler = std::function<void(const std::vector<std::uint8_t>&)>;
  using ResetHandler = std::function<void()>;
  using RttHandler = std::function<void(SimTime)>;

  Channel(Transport& transport, std::uint16_t local_port, Ipv4Address remote_ip,
          std::uint16_t remote_port);

  // Queues bytes for delivery; split into segments of at most mss bytes.
  void send(const std::vector<std::uint8_t>& bytes);
  // Abandons the channel without notifying the peer.
  void close();

  void on_data(DataHandler handler) { data_handler_ = std::move(handler); }
  void on_reset(ResetHandler handler) { reset_handler_ = std::move(handler); }
  void on_rtt(RttHandler handler) { rtt_handler_ = std::move(handler); }

  bool open() const { return open_; }
  std::uint16_t local_port() const { return local_port_; }
  Ipv4Address remote_ip() const { return remote_ip_; }
  std::uint16_t remote_port() const { return remote_port_; }

  SimTime srtt() const { return srtt_; }
  SimTime rto() const;
  std::uint64_t segments_sent() const { return segments_sent_; }
  std::uint64_t retransmissions() const { return retransmissions_; }
  std::size_t in_flight() const { return in_flight_.size(); }

 private:
  friend class Transport;

  struct Outstanding {
    std::vector<std::uint8_t> payload;
    SimTime sent_at = 0;
    bool retransmitted = false;
  };

  void handle(const Segment& segment);
  void fill_window();
  void transmit(std::uint32_t seq, const std::vector<std::uint8_t>& payload);
  void arm_timer();
  void on_timeout();
  void reset(bool notify);
  void send_ack();

  Transport& transport_;
  std::uint16_t local_port_;
  Ipv4Address remote_ip_;
  std::uint16_t remote_port_;
  bool open_ = true;

  std::uint32_t next_seq_ = 0;  // next new sequence number
  std::uint32_t base_ = 0;      // oldest unacknowledged
  std::deque<std::vector<std::uint8_t>> unsent_;
  std::map<std::uint32_t, Outstanding> in_flight_;
  std::uint32_t rcv_next_ = 0;

  SimTime srtt_ = 0;
  bool have_srtt_ = false;
  std::uint32_t backoff_ = 0;
  std::uint32_t consecutive_timeouts_ = 0;
  EventId timer_ = 0;
  bool timer_armed_ = false;

  std::uint64_t segments_sent_ = 0;
  std::uint64_t retransmissions_ = 0;

  DataHandler data_handler_;
  ResetHandler reset_handler_;
  RttHandler rtt_handler_;
};

// Per-host transport endpoint multiplexing channels and datagrams.
class Transport {
 public:
  using AcceptHandler = std::function<void(const std::shared_ptr<Channel>&)>;
  using DatagramHandler =
      std::function<void(Ipv4Address src, std::uint16_t src_port, const std::vector<std::uint8_t>&)>;

  Transport(Host& host, TransportConfig config = {});

  Transport(const Transport&) = delete;
  Transport& operator=(const Transport&) = delete;

  std::shared_ptr<Channel> open_channel(Ipv4Address dst, std::uint16_t dst_port);
  void listen(std::uint16_t port, AcceptHandler handler);

  void bind_datagram(std::uint16_t port, DatagramHandler handler);
  void send_datagram(Ipv4Address dst, std::uint16_t dst_port, std::uint16_t src_port,
                     const std::vector<std::uint8_t>& bytes);

  Host& host() { return host_; }
  const TransportConfig& config() const { return config_; }
  EventQueue& events() { return host_.network().events(); }

  std::uint64_t resets_sent() const { return resets_sent_; }
  std::uint64_t dropped_segments() const { return dropped_segments_; }

 private:
  friend class Channel;
  using Key = std::tuple<std::uint16_t, std::uint32_t, std::uint16_t>;

  void on_segment(const IpPacket& packet);
  void on_datagram(const IpPacket& packet);
  void send_segment(Ipv4Address dst, Segment segment);
  void forget(const Channel& channel);

  Host& host_;
  TransportConfig config_;
  std::map<Key, std::shared_ptr<Channel>> channels_;
  std::map<std::uint16_t, AcceptHandler> listeners_;
  std::map<std::uint16_t, DatagramHandler> datagram_ports_;
  std::uint16_t next_ephemeral_ = 49152;
  std::uint64_t resets_sent_ = 0;
  std::uint64_t dropped_segments_ = 0;
};

}  // namespace shipcps::netsim
