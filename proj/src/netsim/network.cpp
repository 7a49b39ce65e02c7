#include "shipcps/netsim/network.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <set>

namespace shipcps::netsim {

std::string_view to_string(TapDirection direction) {
  return direction == TapDirection::kIngress ? "rx" : "tx";
}

std::string_view to_string(Disposition disposition) {
  switch (disposition) {
    case Disposition::kDelivered: return "delivered";
    case Disposition::kDropped: return "dropped";
    case Disposition::kModified: return "modified";
  }
  return "unknown";
}

std::optional<MacAddress> ArpTable::lookup(Ipv4Address ip) const {
  auto it = entries_.find(ip);
  if (it == entries_.end()) return std::nullopt;
  return it->second.mac;
}

// ---------------------------------------------------------------- Host

Host::Host(Network& network, std::string name, MacAddress mac, Ipv4Address ip,
           Ipv4Address gateway, int lan)
    : network_(network), name_(std::move(name)), mac_(mac), ip_(ip), gateway_(gateway), lan_(lan) {}

void Host::set_ip_handler(IpProtocol protocol, IpHandler handler) {
  handlers_[protocol] = std::move(handler);
}

TapHandle Host::add_observe_tap(ObserveTap tap) {
  observe_taps_.emplace_back(next_tap_, std::move(tap));
  return next_tap_++;
}

TapHandle Host::add_intercept_tap(InterceptTap tap) {
  intercept_taps_.emplace_back(next_tap_, std::move(tap));
  return next_tap_++;
}

void Host::remove_tap(TapHandle handle) {
  std::erase_if(observe_taps_, [handle](const auto& t) { return t.first == handle; });
  std::erase_if(intercept_taps_, [handle](const auto& t) { return t.first == handle; });
}

void Host::receive(Frame frame, int /*port*/) {
  network_.notify_host_frame(*this, TapDirection::kIngress, frame, Disposition::kDelivered);
  for (const auto& [handle, tap] : observe_taps_) tap(frame, TapDirection::kIngress);
  // Copy: an intercept tap may remove itself while running.
  auto intercepts = intercept_taps_;
  for (const auto& [handle, tap] : intercepts) {
    if (tap(frame, TapDirection::kIngress) == TapVerdict::kDrop) return;
  }
  if (frame.dst != mac_ && !frame.dst.is_broadcast()) return;
  if (const auto* arp = frame.arp()) {
    handle_arp(*arp);
    return;
  }
  const auto* packet = frame.ip();
  if (packet == nullptr || packet->dst != ip_) return;
  if (auto it = handlers_.find(packet->protocol); it != handlers_.end()) it->second(*packet);
}

void Host::handle_arp(const ArpMessage& message) {
  if (message.op == ArpMessage::Op::kRequest) {
    if (message.target_ip != ip_) return;
    arp_.update(message.sender_ip, message.sender_mac, network_.now());
    Frame reply;
    reply.src = mac_;
    reply.dst = message.sender_mac;
    reply.ethertype = EtherType::kArp;
    reply.payload = ArpMessage{ArpMessage::Op::kReply, mac_, ip_, message.sender_mac,
                               message.sender_ip};
    send_frame(std::move(reply));
    return;
  }
  arp_update(message);
}

void Host::arp_update(const ArpMessage& reply) {
  arp_.update(reply.sender_ip, reply.sender_mac, network_.now());
  auto it = pending_.find(reply.sender_ip);
  if (it == pending_.end()) return;
  Pending pending = std::move(it->second);
  pending_.erase(it);
  network_.events().cancel(pending.timeout);
  for (auto& waiter : pending.waiters) waiter(reply.sender_mac);
}

void Host::arp_resolve(Ipv4Address ip, std::function<void(std::optional<MacAddress>)> done) {
  if (auto mac = arp_.lookup(ip)) {
    done(*mac);
    return;
  }
  auto [it, inserted] = pending_.try_emplace(ip);
  it->second.waiters.push_back(std::move(done));
  if (!inserted) return;
  it->second.timeout = network_.events().schedule_in(kArpTimeout, [this, ip] {
    auto found = pending_.find(ip);
    if (found == pending_.end()) return;
    Pending pending = std::move(found->second);
    pending_.erase(found);
    ++arp_failures_;
    for (auto& waiter : pending.waiters) waiter(std::nullopt);
  });
  Frame request;
  request.src = mac_;
  request.dst = MacAddress::broadcast();
  request.ethertype = EtherType::kArp;
  request.payload = ArpMessage{ArpMessage::Op::kRequest, mac_, ip_, MacAddress{}, ip};
  send_frame(std::move(request));
}

void Host::send_ip(IpPacket packet) {
  const Ipv4Address next_hop = packet.dst.subnet24() == ip_.subnet24() ? packet.dst : gateway_;
  arp_resolve(next_hop, [this, packet = std::move(packet)](std::optional<MacAddress> mac) mutable {
    Frame frame;
    frame.src = mac_;
    frame.ethertype = EtherType::kIpv4;
    if (!mac) {
      frame.payload = packet;
      frame.id = network_.next_frame_id();
      network_.notify_drop(name_, frame, DropReason::kArpTimeout);
      if (failure_handler_) failure_handler_(packet);
      return;
    }
    frame.dst = *mac;
    frame.payload = std::move(packet);
    send_frame(std::move(frame));
  });
}

void Host::send_frame(Frame frame, Disposition disposition) {
  if (frame.id == 0) frame.id = network_.next_frame_id();
  emit(std::move(frame), disposition);
}

void Host::emit(Frame frame, Disposition disposition) {
  auto intercepts = intercept_taps_;
  for (const auto& [handle, tap] : intercepts) {
    if (tap(frame, TapDirection::kEgress) == TapVerdict::kDrop) return;
  }
  for (const auto& [handle, tap] : observe_taps_) tap(frame, TapDirection::kEgress);
  network_.notify_host_frame(*this, TapDirection::kEgress, frame, disposition);
  if (uplink_ != nullptr) uplink_->transmit(std::move(frame));
}

// ---------------------------------------------------------------- Switch

std::optional<int> Switch::port_of(const MacAddress& mac) const {
  auto it = table_.find(mac);
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

void Switch::receive(Frame frame, int port) {
  if (!frame.src.is_broadcast()) table_[frame.src] = port;
  if (!frame.dst.is_broadcast()) {
    if (auto out = port_of(frame.dst)) {
      if (*out != port) ports_[static_cast<std::size_t>(*out)]->transmit(std::move(frame));
      return;
    }
  }
  for (std::size_t p = 0; p < ports_.size(); ++p) {
    if (static_cast<int>(p) != port) ports_[p]->transmit(frame);
  }
}

// ---------------------------------------------------------------- Router

Router::Router(Network& network, std::string name, int index)
    : network_(network), name_(std::move(name)), index_(index) {}

int Router::add_interface(Interface iface) {
  interfaces_.push_back(std::move(iface));
  return static_cast<int>(interfaces_.size()) - 1;
}

std::optional<Router::Route> Router::route_for(Ipv4Address dst) const {
  auto it = routes_.find(dst.subnet24());
  if (it == routes_.end()) return std::nullopt;
  return it->second;
}

void Router::receive(Frame frame, int port) {
  auto& iface = interfaces_[static_cast<std::size_t>(port)];
  if (const auto* arp = frame.arp()) {
    if (!iface.lan) return;
    if (arp->op == ArpMessage::Op::kRequest) {
      if (arp->target_ip != iface.ip) return;
      iface.arp.update(arp->sender_ip, arp->sender_mac, network_.now());
      Frame reply;
      reply.src = iface.mac;
      reply.dst = arp->sender_mac;
      reply.ethertype = EtherType::kArp;
      reply.payload =
          ArpMessage{ArpMessage::Op::kReply, iface.mac, iface.ip, arp->sender_mac, arp->sender_ip};
      reply.id = network_.next_frame_id();
      iface.out->transmit(std::move(reply));
      return;
    }
    if (frame.dst != iface.mac && !frame.dst.is_broadcast()) return;
    iface.arp.update(arp->sender_ip, arp->sender_mac, network_.now());
    auto it = iface.pending.find(arp->sender_ip);
    if (it != iface.pending.end()) {
      auto packets = std::move(it->second);
      iface.pending.erase(it);
      for (auto& p : packets) {
        Frame out;
        out.src = iface.mac;
        out.dst = arp->sender_mac;
        out.payload = std::move(p);
        out.id = network_.next_frame_id();
        iface.out->transmit(std::move(out));
      }
    }
    return;
  }
  if (iface.lan && frame.dst != iface.mac) return;
  auto* packet = frame.ip();
  if (packet == nullptr) return;
  for (const auto& i : interfaces_) {
    if (i.ip.value != 0 && i.ip == packet->dst) return;
  }
  IpPacket copy = std::move(*packet);
  forward(std::move(copy), frame);
}

void Router::forward(IpPacket packet, const Frame& original) {
  if (packet.ttl <= 1) {
    network_.notify_drop(name_, original, DropReason::kTtlExpired);
    return;
  }
  --packet.ttl;
  auto route = route_for(packet.dst);
  if (!route) {
    network_.notify_drop(name_, original, DropReason::kNoRoute);
    return;
  }
  send_on(route->interface, std::move(packet), original);
}

void Router::send_on(int index, IpPacket packet, const Frame& original) {
  auto& iface = interfaces_[static_cast<std::size_t>(index)];
  Frame out;
  out.src = iface.mac;
  out.ethertype = EtherType::kIpv4;
  out.id = original.id;
  if (!iface.lan) {
    out.dst = iface.peer_mac;
    out.payload = std::move(packet);
    iface.out->transmit(std::move(out));
    return;
  }
  const Ipv4Address target = packet.dst;
  if (auto mac = iface.arp.lookup(target)) {
    out.dst = *mac;
    out.payload = std::move(packet);
    iface.out->transmit(std::move(out));
    return;
  }
  auto [it, inserted] = iface.pending.try_emplace(target);
  it->second.push_back(std::move(packet));
  if (!inserted) return;
  network_.events().schedule_in(kArpTimeout, [this, index, target] {
    auto& i = interfaces_[static_cast<std::size_t>(index)];
    auto found = i.pending.find(target);
    if (found == i.pending.end()) return;
    for (auto& p : found->second) {
      Frame dropped;
      dropped.payload = std::move(p);
      network_.notify_drop(name_, dropped, DropReason::kArpTimeout);
    }
    i.pending.erase(found);
  });
  Frame request;
  request.src = iface.mac;
  request.dst = MacAddress::broadcast();
  request.ethertype = EtherType::kArp;
  request.payload = ArpMessage{ArpMessage::Op::kRequest, iface.mac, iface.ip, MacAddress{}, target};
  request.id = network_.next_frame_id();
  iface.out->transmit(std::move(request));
}

// ---------------------------------------------------------------- Topology

Ipv4Address lan_host_address(int lan, int host) {
  return Ipv4Address::from_octets(10, 0, static_cast<std::uint8_t>(lan),
                                  static_cast<std::uint8_t>(host));
}

Ipv4Address lan_gateway_address(int lan) { return lan_host_address(lan, 1); }

TopologySpec ship_topology(const ShipTopologyParams& params, const std::vector<DeviceNode>& devices,
                           bool with_attacker) {
  if (params.zone_delays_s.size() != 4) throw TopologyError("need four zone delays");
  TopologySpec spec;
  spec.controller = kControllerNode;
  const LinkParams fabric{params.backbone_bandwidth_bps, 100'000, params.queue_capacity};
  spec.uplink = fabric;
  spec.backbone = fabric;
  for (int z = 1; z <= 4; ++z) spec.router_links.emplace_back(0, z);
  for (int z = 1; z <= 4; ++z) spec.router_links.emplace_back(z, z % 4 + 1);

  std::uint32_t ordinal = 1;
  auto access = [&](double bandwidth, double delay_s) {
    return LinkParams{bandwidth, from_seconds(delay_s), params.queue_capacity};
  };
  spec.nodes.push_back(NodeSpec{kControllerNode, lan_host_address(0, 10),
                                MacAddress::from_index(ordinal++), 0,
                                access(params.access_bandwidth_bps, params.controller_delay_s)});
  int next_host[5] = {11, 10, 10, 10, 10};
  for (const auto& d : devices) {
    if (d.zone < 1 || d.zone > 4) throw TopologyError("device zone must be 1..4: " + d.name);
    const double delay = params.zone_delays_s[static_cast<std::size_t>(d.zone - 1)];
    spec.nodes.push_back(NodeSpec{d.name, lan_host_address(d.zone, next_host[d.zone]++),
                                  MacAddress::from_index(ordinal++), d.zone,
                                  access(params.access_bandwidth_bps, delay)});
  }
  if (with_attacker) {
    spec.nodes.push_back(NodeSpec{kAttackerNode, lan_host_address(4, 66),
                                  MacAddress::from_index(ordinal++), 4,
                                  access(params.attacker_bandwidth_bps, params.zone_delays_s[3])});
  }
  return spec;
}

// ---------------------------------------------------------------- Network

Network::Network(EventQueue& events, TopologySpec spec) : events_(events), spec_(std::move(spec)) {
  build();
  compute_routes();
}

void Network::build() {
  if (spec_.lan_count < 1 || static_cast<int>(spec_.lan_names.size()) < spec_.lan_count) {
    throw TopologyError("every LAN needs a name");
  }
  const bool has_controller =
      std::any_of(spec_.nodes.begin(), spec_.nodes.end(),
                  [&](const NodeSpec& n) { return n.name == spec_.controller; });
  if (!has_controller || spec_.nodes.size() < 2) {
    throw TopologyError("controller unreachable: topology needs a controller and at least one device");
  }
  std::set<std::string> names;
  std::set<Ipv4Address> ips;
  std::set<MacAddress> macs;
  for (const auto& n : spec_.nodes) {
    if (!names.insert(n.name).second) throw TopologyError("duplicate node name: " + n.name);
    if (!ips.insert(n.ip).second) throw TopologyError("duplicate IP: " + n.ip.str());
    if (!macs.insert(n.mac).second) throw TopologyError("duplicate MAC: " + n.mac.str());
    if (n.lan < 0 || n.lan >= spec_.lan_count) throw TopologyError("bad LAN for " + n.name);
    if (n.ip.subnet24() != lan_gateway_address(n.lan).subnet24()) {
      throw TopologyError("address outside LAN subnet: " + n.name);
    }
    if (!(n.access.bandwidth_bps > 0) || n.access.delay < 0 || n.access.queue_capacity < 1) {
      throw TopologyError("invalid access link parameters: " + n.name);
    }
  }
  // Router graph connectivity from the controller LAN.
  std::vector<std::vector<int>> adjacency(static_cast<std::size_t>(spec_.lan_count));
  for (auto [a, b] : spec_.router_links) {
    if (a < 0 || b < 0 || a >= spec_.lan_count || b >= spec_.lan_count || a == b) {
      throw TopologyError("bad router link");
    }
    adjacency[static_cast<std::size_t>(a)].push_back(b);
    adjacency[static_cast<std::size_t>(b)].push_back(a);
  }
  const int controller_lan =
      std::find_if(spec_.nodes.begin(), spec_.nodes.end(),
                   [&](const NodeSpec& n) { return n.name == spec_.controller; })
          ->lan;
  std::vector<bool> seen(static_cast<std::size_t>(spec_.lan_count), false);
  std::queue<int> frontier;
  frontier.push(controller_lan);
  seen[static_cast<std::size_t>(controller_lan)] = true;
  while (!frontier.empty()) {
    int lan = frontier.front();
    frontier.pop();
    for (int next : adjacency[static_cast<std::size_t>(lan)]) {
      if (!seen[static_cast<std::size_t>(next)]) {
        seen[static_cast<std::size_t>(next)] = true;
        frontier.push(next);
      }
    }
  }
  for (const auto& n : spec_.nodes) {
    if (!seen[static_cast<std::size_t>(n.lan)]) {
      throw TopologyError("disconnected graph: " + n.name + " cannot reach the controller");
    }
  }

  auto make_link = [&](std::string id, LinkParams params, FrameSink* a, int a_port, FrameSink* b,
                       int b_port) -> Link& {
    links_.push_back(std::make_unique<Link>(events_, id, params, a, a_port, b, b_port));
    Link& link = *links_.back();
    link.forward.set_drop_observer(&drop_observer_);
    link.reverse.set_drop_observer(&drop_observer_);
    link_index_[link.id] = &link;
    return link;
  };

  for (int lan = 0; lan < spec_.lan_count; ++lan) {
    const auto& lan_name = spec_.lan_names[static_cast<std::size_t>(lan)];
    routers_.push_back(std::make_unique<Router>(*this, "R" + std::to_string(lan), lan));
    switches_.push_back(std::make_unique<Switch>("SW-" + lan_name));
    Router& router = *routers_.back();
    Switch& sw = *switches_.back();
    Router::Interface iface;
    iface.name = lan_name;
    iface.mac = MacAddress::from_index(0x10000u + static_cast<std::uint32_t>(lan) * 16u);
    iface.ip = lan_gateway_address(lan);
    iface.lan = true;
    const int iface_index = static_cast<int>(router.interfaces().size());
    const int port = static_cast<int>(0);
    Link& uplink = make_link("uplink:" + lan_name, spec_.uplink, &sw, port, &router, iface_index);
    sw.add_port(&uplink.forward);
    iface.out = &uplink.reverse;
    router.add_interface(std::move(iface));
  }

  for (const auto& n : spec_.nodes) {
    hosts_.push_back(std::make_unique<Host>(*this, n.name, n.mac, n.ip,
                                            lan_gateway_address(n.lan), n.lan));
    Host& host = *hosts_.back();
    Switch& sw = *switches_[static_cast<std::size_t>(n.lan)];
    Link& access = make_link("access:" + n.name, n.access, &host, 0, &sw, sw.port_count());
    sw.add_port(&access.reverse);
    host.attach(&access.forward);
    host_index_[n.name] = &host;
    ip_index_[n.ip.value] = &host;
  }

  for (auto [a, b] : spec_.router_links) {
    const int lo = std::min(a, b);
    const int hi = std::max(a, b);
    if (backbone_.contains({lo, hi})) throw TopologyError("duplicate router link");
    Router& ra = *routers_[static_cast<std::size_t>(lo)];
    Router& rb = *routers_[static_cast<std::size_t>(hi)];
    const auto base = [](int lan, std::size_t slot) {
      return MacAddress::from_index(0x10000u + static_cast<std::uint32_t>(lan) * 16u +
                                    static_cast<std::uint32_t>(slot));
    };
    const MacAddress mac_a = base(lo, ra.interfaces().size());
    const MacAddress mac_b = base(hi, rb.interfaces().size());
    const int ia = static_cast<int>(ra.interfaces().size());
    const int ib = static_cast<int>(rb.interfaces().size());
    Link& link = make_link("backbone:R" + std::to_string(lo) + "-R" + std::to_string(hi),
                           spec_.backbone, &ra, ia, &rb, ib);
    Router::Interface fa;
    fa.name = "to-R" + std::to_string(hi);
    fa.mac = mac_a;
    fa.out = &link.forward;
    fa.peer_mac = mac_b;
    ra.add_interface(std::move(fa));
    Router::Interface fb;
    fb.name = "to-R" + std::to_string(lo);
    fb.mac = mac_b;
    fb.out = &link.reverse;
    fb.peer_mac = mac_a;
    rb.add_interface(std::move(fb));
    backbone_[{lo, hi}] = &link;
  }
}

std::vector<int> Network::router_path(int from_lan, int to_lan) const {
  std::vector<int> path{from_lan};
  int at = from_lan;
  while (at != to_lan) {
    at = next_hop_[static_cast<std::size_t>(at)][static_cast<std::size_t>(to_lan)];
    if (at < 0) return {};
    path.push_back(at);
  }
  return path;
}

void Network::compute_routes() {
  const int n = spec_.lan_count;
  next_hop_.assign(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), -1));
  for (int src = 0; src < n; ++src) {
    // Dijkstra on propagation delay; ties resolved by lower router index.
    std::vector<SimTime> dist(static_cast<std::size_t>(n), std::numeric_limits<SimTime>::max());
    std::vector<int> first(static_cast<std::size_t>(n), -1);
    using Item = std::tuple<SimTime, int, int>;  // dist, lan, first hop
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[static_cast<std::size_t>(src)] = 0;
    first[static_cast<std::size_t>(src)] = src;
    heap.emplace(0, src, src);
    std::vector<bool> done(static_cast<std::size_t>(n), false);
    while (!heap.empty()) {
      auto [d, lan, hop] = heap.top();
      heap.pop();
      if (done[static_cast<std::size_t>(lan)]) continue;
      done[static_cast<std::size_t>(lan)] = true;
      first[static_cast<std::size_t>(lan)] = hop;
      for (const auto& [key, link] : backbone_) {
        int other = -1;
        if (key.first == lan) other = key.second;
        else if (key.second == lan) other = key.first;
        if (other < 0 || done[static_cast<std::size_t>(other)]) continue;
        const SimTime nd = d + link->forward.params().delay;
        const int next_first = lan == src ? other : hop;
        if (nd < dist[static_cast<std::size_t>(other)]) {
          dist[static_cast<std::size_t>(other)] = nd;
          heap.emplace(nd, other, next_first);
        }
      }
    }
    for (int dst = 0; dst < n; ++dst) {
      next_hop_[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)] =
          first[static_cast<std::size_t>(dst)];
    }
    Router& router = *routers_[static_cast<std::size_t>(src)];
    for (int dst = 0; dst < n; ++dst) {
      const std::uint32_t subnet = lan_gateway_address(dst).subnet24();
      if (dst == src) {
        router.set_route(subnet, Router::Route{0});
        continue;
      }
      const int hop = first[static_cast<std::size_t>(dst)];
      if (hop < 0) continue;
      const std::string want = "to-R" + std::to_string(hop);
      const auto& ifaces = router.interfaces();
      for (std::size_t i = 0; i < ifaces.size(); ++i) {
        if (ifaces[i].name == want) router.set_route(subnet, Router::Route{static_cast<int>(i)});
      }
    }
  }
}

Host& Network::host(std::string_view name) {
  if (auto* h = find_host(name)) return *h;
  throw TopologyError("unknown host: " + std::string(name));
}

const Host& Network::host(std::string_view name) const {
  auto it = host_index_.find(std::string(name));
  if (it == host_index_.end()) throw TopologyError("unknown host: " + std::string(name));
  return *it->second;
}

Host* Network::find_host(std::string_view name) {
  auto it = host_index_.find(std::string(name));
  return it == host_index_.end() ? nullptr : it->second;
}

Host* Network::host_by_ip(Ipv4Address ip) {
  auto it = ip_index_.find(ip.value);
  return it == ip_index_.end() ? nullptr : it->second;
}

Link& Network::link(std::string_view id) {
  if (auto* l = find_link(id)) return *l;
  throw TopologyError("unknown link: " + std::string(id));
}

Link* Network::find_link(std::string_view id) {
  auto it = link_index_.find(std::string(id));
  return it == link_index_.end() ? nullptr : it->second;
}

std::vector<std::string> Network::link_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : links_) ids.push_back(l->id);
  return ids;
}

SimTime Network::path_delay(std::string_view from, std::string_view to) const {
  const Host& a = host(from);
  const Host& b = host(to);
  auto access = [&](const Host& h) {
    return link_index_.at("access:" + h.name())->forward.propagation_delay();
  };
  SimTime total = access(a) + access(b);
  if (a.lan() == b.lan()) return total;
  auto uplink = [&](int lan) {
    return link_index_.at("uplink:" + spec_.lan_names[static_cast<std::size_t>(lan)])
        ->forward.propagation_delay();
  };
  total += uplink(a.lan()) + uplink(b.lan());
  const auto path = router_path(a.lan(), b.lan());
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const auto key = std::make_pair(std::min(path[i], path[i + 1]), std::max(path[i], path[i + 1]));
    total += backbone_.at(key)->forward.propagation_delay();
  }
  return total;
}

void Network::notify_host_frame(const Host& host, TapDirection direction, const Frame& frame,
                                Disposition disposition) {
  if (frame_observer_) frame_observer_(HostFrameEvent{now(), host, direction, frame, disposition});
}

void Network::notify_drop(std::string_view where, const Frame& frame, DropReason reason) {
  if (drop_observer_) drop_observer_(DropEvent{now(), where, frame, reason});
}

}  // namespace shipcps::netsim
