#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "shipcps/netsim/event_queue.hpp"
#include "shipcps/netsim/link.hpp"
#include "shipcps/netsim/packet.hpp"

namespace shipcps::netsim {

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Network;

enum class TapDirection { kIngress, kEgress };
enum class TapMode { kObserve, kIntercept };
enum class TapVerdict { kPass, kDrop };
enum class Disposition { kDelivered, kDropped, kModified };

std::string_view to_string(TapDirection direction);
std::string_view to_string(Disposition disposition);

using TapHandle = std::uint64_t;
using ObserveTap = std::function<void(const Frame&, TapDirection)>;
using InterceptTap = std::function<TapVerdict(Frame&, TapDirection)>;

struct ArpEntry {
  MacAddress mac;
  SimTime inserted_at = 0;
};

inline constexpr SimTime kArpTimeout = kNanosPerSecond;

// Address resolution state for one interface. Entries never expire and any
// reply overwrites them, solicited or not.
class ArpTable {
 public:
  std::optional<MacAddress> lookup(Ipv4Address ip) const;
  void update(Ipv4Address ip, MacAddress mac, SimTime now) { entries_[ip] = ArpEntry{mac, now}; }
  const std::map<Ipv4Address, ArpEntry>& entries() const { return entries_; }

 private:
  std::map<Ipv4Address, ArpEntry> entries_;
};

// End host with a single interface on one LAN.
class Host : public FrameSink {
 public:
  using IpHandler = std::function<void(const IpPacket&)>;
  using FailureHandler = std::function<void(const IpPacket&)>;

  Host(Network& network, std::string name, MacAddress mac, Ipv4Address ip, Ipv4Address gateway,
       int lan);

  void receive(Frame frame, int port) override;
  const std::string& name() const override { return name_; }

  void attach(LinkDirection* uplink) { uplink_ = uplink; }

  // Resolves the next hop and sends; packets whose resolution times out are
  // dropped and reported to the failure handler.
  void send_ip(IpPacket packet);
  // Raw layer-2 send through egress taps.
  void send_frame(Frame frame, Disposition disposition = Disposition::kDelivered);

  void set_ip_handler(IpProtocol protocol, IpHandler handler);
  void set_failure_handler(FailureHandler handler) { failure_handler_ = std::move(handler); }

  TapHandle add_observe_tap(ObserveTap tap);
  TapHandle add_intercept_tap(InterceptTap tap);
  void remove_tap(TapHandle handle);

  ArpTable& arp() { return arp_; }
  const ArpTable& arp() const { return arp_; }
  // Processes an ARP reply the way the stack would on receipt.
  void arp_update(const ArpMessage& reply);
  // Starts resolution if needed; the callback fires with the MAC or nullopt on timeout.
  void arp_resolve(Ipv4Address ip, std::function<void(std::optional<MacAddress>)> done);

  MacAddress mac() const { return mac_; }
  Ipv4Address ip() const { return ip_; }
  Ipv4Address gateway() const { return gateway_; }
  int lan() const { return lan_; }
  Network& network() { return network_; }

  std::uint64_t arp_failures() const { return arp_failures_; }

 private:
  struct Pending {
    std::vector<std::function<void(std::optional<MacAddress>)>> waiters;
    EventId timeout = 0;
  };

  void handle_arp(const ArpMessage& message);
  void emit(Frame frame, Disposition disposition);

  Network& network_;
  std::string name_;
  MacAddress mac_;
  Ipv4Address ip_;
  Ipv4Address gateway_;
  int lan_;
  LinkDirection* uplink_ = nullptr;
  ArpTable arp_;
  std::map<Ipv4Address, Pending> pending_;
  std::map<IpProtocol, IpHandler> handlers_;
  FailureHandler failure_handler_;
  std::vector<std::pair<TapHandle, ObserveTap>> observe_taps_;
  std::vector<std::pair<TapHandle, InterceptTap>> intercept_taps_;
  TapHandle next_tap_ = 1;
  std::uint64_t arp_failures_ = 0;
};

// Learning switch; forwarding is instantaneous, queueing happens on links.
class Switch : public FrameSink {
 public:
  explicit Switch(std::string name) : name_(std::move(name)) {}

  void receive(Frame frame, int port) override;
  const std::string& name() const override { return name_; }

  int add_port(LinkDirection* out) {
    ports_.push_back(out);
    return static_cast<int>(ports_.size()) - 1;
  }
  int port_count() const { return static_cast<int>(ports_.size()); }
  std::optional<int> port_of(const MacAddress& mac) const;

 private:
  std::string name_;
  std::vector<LinkDirection*> ports_;
  std::map<MacAddress, int> table_;
};

class Router : public FrameSink {
 public:
  struct Interface {
    std::string name;
    MacAddress mac;
    Ipv4Address ip;  // zero on point-to-point interfaces
    LinkDirection* out = nullptr;
    bool lan = false;
    MacAddress peer_mac;  // point-to-point peer
    ArpTable arp;
    std::map<Ipv4Address, std::vector<IpPacket>> pending;
  };
  struct Route {
    int interface = 0;
  };

  Router(Network& network, std::string name, int index);

  void receive(Frame frame, int port) override;
  const std::string& name() const override { return name_; }

  int add_interface(Interface iface);
  Interface& interface(int i) { return interfaces_[static_cast<std::size_t>(i)]; }
  const std::vector<Interface>& interfaces() const { return interfaces_; }
  void set_route(std::uint32_t subnet, Route route) { routes_[subnet] = route; }
  std::optional<Route> route_for(Ipv4Address dst) const;
  int index() const { return index_; }

 private:
  void forward(IpPacket packet, const Frame& original);
  void send_on(int iface, IpPacket packet, const Frame& original);

  Network& network_;
  std::string name_;
  int index_;
  std::vector<Interface> interfaces_;
  std::map<std::uint32_t, Route> routes_;
};

struct NodeSpec {
  std::string name;
  Ipv4Address ip;
  MacAddress mac;
  int lan = 0;
  LinkParams access;
};

// LAN 0 is the controller LAN, LANs 1..4 are the ship zones. One router per
// LAN; routers interconnect through backbone links.
struct TopologySpec {
  std::vector<NodeSpec> nodes;
  int lan_count = 5;
  std::vector<std::string> lan_names = {"ctrl", "zone1", "zone2", "zone3", "zone4"};
  LinkParams uplink{100e6, 100'000, 50};
  LinkParams backbone{100e6, 100'000, 50};
  std::vector<std::pair<int, int>> router_links;
  std::string controller;  // node that every other node must reach
};

struct ShipTopologyParams {
  double access_bandwidth_bps = 10e6;
  double backbone_bandwidth_bps = 100e6;
  std::size_t queue_capacity = 50;
  std::vector<double> zone_delays_s = {0.002, 0.004, 0.006, 0.008};
  double controller_delay_s = 0.001;
  double attacker_bandwidth_bps = 100e6;
};

struct DeviceNode {
  std::string name;
  int zone = 1;
};

Ipv4Address lan_host_address(int lan, int host);
Ipv4Address lan_gateway_address(int lan);

// Five-LAN ship network: routers in a ring with a spoke from every zone
// router to the controller router. Devices are numbered per zone in order.
TopologySpec ship_topology(const ShipTopologyParams& params, const std::vector<DeviceNode>& devices,
                           bool with_attacker);

inline constexpr const char* kControllerNode = "controller";
inline constexpr const char* kAttackerNode = "attacker";

struct HostFrameEvent {
  SimTime time;
  const Host& host;
  TapDirection direction;
  const Frame& frame;
  Disposition disposition;
};

using HostFrameObserver = std::function<void(const HostFrameEvent&)>;

class Network {
 public:
  Network(EventQueue& events, TopologySpec spec);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  EventQueue& events() { return events_; }
  SimTime now() const { return events_.now(); }

  Host& host(std::string_view name);
  const Host& host(std::string_view name) const;
  Host* find_host(std::string_view name);
  Host* host_by_ip(Ipv4Address ip);
  Router& router(int lan) { return *routers_[static_cast<std::size_t>(lan)]; }
  Link& link(std::string_view id);
  Link* find_link(std::string_view id);
  std::vector<std::string> link_ids() const;
  const std::vector<std::unique_ptr<Host>>& hosts() const { return hosts_; }
  const TopologySpec& spec() const { return spec_; }

  // Sum of propagation delays along the routed path between two hosts.
  SimTime path_delay(std::string_view from, std::string_view to) const;

  void set_host_frame_observer(HostFrameObserver observer) { frame_observer_ = std::move(observer); }
  void set_drop_observer(DropObserver observer) { drop_observer_ = std::move(observer); }

  std::uint64_t next_frame_id() { return ++frame_ids_; }

  // Internal hooks used by network elements.
  void notify_host_frame(const Host& host, TapDirection direction, const Frame& frame,
                         Disposition disposition);
  void notify_drop(std::string_view where, const Frame& frame, DropReason reason);

 private:
  void build();
  void compute_routes();
  std::vector<int> router_path(int from_lan, int to_lan) const;

  EventQueue& events_;
  TopologySpec spec_;
  std::vector<std::unique_ptr<Host>> hosts_;
  std::vector<std::unique_ptr<Switch>> switches_;
  std::vector<std::unique_ptr<Router>> routers_;
  std::vector<std::unique_ptr<Link>> links_;
  std::unordered_map<std::string, Host*> host_index_;
  std::map<std::uint32_t, Host*> ip_index_;
  std::unordered_map<std::string, Link*> link_index_;
  // Backbone link between two routers, keyed by (min lan, max lan).
  std::map<std::pair<int, int>, Link*> backbone_;
  // Per (router, destination lan) next-hop router.
  std::vector<std::vector<int>> next_hop_;
  HostFrameObserver frame_observer_;
  DropObserver drop_observer_;
  std::uint64_t frame_ids_ = 0;
};

}  // namespace shipcps::netsim
