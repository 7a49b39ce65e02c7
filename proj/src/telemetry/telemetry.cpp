#include "shipcps/telemetry/telemetry.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "shipcps/modbus/codec.hpp"

namespace shipcps::telemetry {

std::string_view to_string(Direction direction) {
  switch (direction) {
    case Direction::kTx: return "tx";
    case Direction::kRx: return "rx";
    case Direction::kDrop: return "drop";
  }
  return "unknown";
}

// ---------------------------------------------------------------- records

PacketTraceRecord make_record(SimTime time, std::string node, Direction direction, const netsim::Frame& frame,
                              netsim::Disposition disposition) {
  PacketTraceRecord r;
  r.time = time;
  r.node = std::move(node);
  r.direction = direction;
  r.size = frame.size_bytes();
  r.disposition = disposition;
  r.frame_id = frame.id;
  if (const auto* arp = frame.arp()) {
    r.protocol = "arp";
    r.src = arp->sender_ip;
    r.dst = arp->target_ip;
    r.flags = static_cast<std::uint8_t>(arp->op);
    return r;
  }
  const auto* ip = frame.ip();
  if (ip == nullptr) return r;
  const auto& seg = ip->segment;
  r.protocol = ip->protocol == netsim::IpProtocol::kTcp ? "tcp" : "udp";
  r.src = ip->src;
  r.dst = ip->dst;
  r.src_port = seg.src_port;
  r.dst_port = seg.dst_port;
  r.payload = seg.payload_size();
  r.seq = seg.seq;
  r.ack = seg.ack;
  r.flags = seg.flags;
  if (!seg.payload.empty() && (seg.src_port == modbus::kPort || seg.dst_port == modbus::kPort)) {
    const auto decoded = seg.dst_port == modbus::kPort && ip->protocol == netsim::IpProtocol::kTcp
                             ? modbus::decode_request(seg.payload)
                             : modbus::decode_response(seg.payload);
    if (const auto* adu = std::get_if<modbus::Adu>(&decoded)) {
      r.modbus = ModbusSummary{adu->header.transaction_id, adu->pdu.function, adu->header.unit_id};
    }
  }
  return r;
}

std::string canonical(const PacketTraceRecord& r) {
  char buf[512];
  std::string modbus = "null";
  if (r.modbus) {
    char m[96];
    std::snprintf(m, sizeof m, "{\"tid\":%u,\"fn\":%u,\"unit\":%u}", r.modbus->transaction_id,
                  r.modbus->function, r.modbus->unit_id);
    modbus = m;
  }
  std::snprintf(buf, sizeof buf,
                "{\"t_ns\":%" PRId64 ",\"node\":\"%s\",\"dir\":\"%s\",\"proto\":\"%s\",\"src\":\"%s:%u\","
                "\"dst\":\"%s:%u\",\"size\":%zu,\"len\":%zu,\"seq\":%u,\"ack\":%u,\"flags\":%u,"
                "\"modbus\":%s,\"disp\":\"%s\",\"reason\":\"%s\",\"id\":%" PRIu64 "}",
                r.time, r.node.c_str(), std::string(to_string(r.direction)).c_str(), r.protocol.c_str(),
                r.src.str().c_str(), r.src_port, r.dst.str().c_str(), r.dst_port, r.size, r.payload, r.seq,
                r.ack, r.flags, modbus.c_str(), std::string(netsim::to_string(r.disposition)).c_str(),
                r.drop_reason.c_str(), r.frame_id);
  return buf;
}

void Fnv1a::update(std::string_view bytes) {
  for (unsigned char c : bytes) {
    h_ ^= c;
    h_ *= 1099511628211ull;
  }
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h_);
  return buf;
}

void TraceRecorder::attach(netsim::Network& network) {
  network.set_host_frame_observer([this](const netsim::HostFrameEvent& e) {
    add(make_record(e.time, e.host.name(),
                    e.direction == netsim::TapDirection::kEgress ? Direction::kTx : Direction::kRx, e.frame,
                    e.disposition));
  });
  network.set_drop_observer([this](const netsim::DropEvent& e) {
    auto r = make_record(e.time, std::string(e.where), Direction::kDrop, e.frame, netsim::Disposition::kDropped);
    r.drop_reason = std::string(netsim::to_string(e.reason));
    add(std::move(r));
  });
}

void TraceRecorder::add(PacketTraceRecord record) {
  std::string line = canonical(record);
  line.push_back('\n');
  hash_.update(line);
  if (sink_) *sink_ << line;
  ++count_;
  if (observer_) observer_(record);
  if (keep_ && (!keep_filter_ || keep_filter_(record))) records_.push_back(std::move(record));
}

// ---------------------------------------------------------------- analysis

bool FlowFilter::matches(const PacketTraceRecord& r) const {
  if (node && r.node != *node) return false;
  if (direction && r.direction != *direction) return false;
  if (protocol && r.protocol != *protocol) return false;
  if (port && r.src_port != *port && r.dst_port != *port) return false;
  if (src && r.src != *src) return false;
  if (dst && r.dst != *dst) return false;
  if (modbus_only && !r.modbus) return false;
  return true;
}

std::vector<RttSample> rtt_series(const std::vector<PacketTraceRecord>& records, const std::string& node,
                                  std::uint16_t remote_port) {
  // (local port, remote address) -> unacknowledged seq -> first send time
  std::map<std::pair<std::uint16_t, std::uint32_t>, std::map<std::uint32_t, SimTime>> open;
  std::vector<RttSample> out;
  for (const auto& r : records) {
    if (r.node != node || r.protocol != "tcp") continue;
    if (r.direction == Direction::kTx && r.dst_port == remote_port && r.payload > 0) {
      open[{r.src_port, r.dst.value}].try_emplace(r.seq, r.time);
    } else if (r.direction == Direction::kRx && r.src_port == remote_port &&
               (r.flags & netsim::segment_flags::kAck) && r.dst_port != remote_port) {
      auto it = open.find({r.dst_port, r.src.value});
      if (it == open.end()) continue;
      auto& pending = it->second;
      while (!pending.empty() && pending.begin()->first < r.ack) {
        out.push_back({r.time, r.time - pending.begin()->second, r.src});
        pending.erase(pending.begin());
      }
    }
  }
  return out;
}

double mean_rtt_seconds(const std::vector<RttSample>& samples, SimTime from, SimTime to) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (s.at < from || s.at >= to) continue;
    total += to_seconds(s.rtt);
    ++n;
  }
  return n ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

namespace {

std::size_t bins(SimTime from, SimTime to, SimTime window) {
  if (window <= 0 || to <= from) throw TelemetryError("bad analysis window");
  return static_cast<std::size_t>((to - from + window - 1) / window);
}

}  // namespace

std::vector<double> throughput(const std::vector<PacketTraceRecord>& records, const FlowFilter& filter, SimTime from,
                               SimTime to, SimTime window, ByteMeasure measure) {
  std::vector<double> out(bins(from, to, window), 0.0);
  for (const auto& r : records) {
    if (r.time < from || r.time >= to || r.disposition == netsim::Disposition::kDropped) continue;
    if (r.direction == Direction::kDrop || !filter.matches(r)) continue;
    out[static_cast<std::size_t>((r.time - from) / window)] +=
        static_cast<double>(measure == ByteMeasure::kWire ? r.size : r.payload);
  }
  const double seconds = to_seconds(window);
  for (auto& b : out) b /= seconds;
  return out;
}

std::map<std::string, std::vector<std::uint64_t>> packet_counts(const std::vector<PacketTraceRecord>& records,
                                                                const FlowFilter& filter, GroupBy group,
                                                                SimTime from, SimTime to, SimTime window) {
  const std::size_t n = bins(from, to, window);
  std::map<std::string, std::vector<std::uint64_t>> out;
  for (const auto& r : records) {
    if (r.time < from || r.time >= to || !filter.matches(r)) continue;
    const std::string key =
        group == GroupBy::kSource ? r.src.str() : std::string(netsim::to_string(r.disposition));
    auto [it, inserted] = out.try_emplace(key);
    if (inserted) it->second.assign(n, 0);
    ++it->second[static_cast<std::size_t>((r.time - from) / window)];
  }
  return out;
}

// ---------------------------------------------------------------- plant

std::vector<Window> violation_windows(const std::vector<plant::PlantState>& log, double dt) {
  std::vector<Window> out;
  bool open = false;
  for (const auto& s : log) {
    if (s.violation && !open) {
      out.push_back({s.t, s.t + dt});
      open = true;
    } else if (s.violation) {
      out.back().end = s.t + dt;
    } else {
      open = false;
    }
  }
  return out;
}

bool overlaps(const Window& w, double start, double end) { return w.start < end && start < w.end; }

void OperabilityAccumulator::add(double t, double dt, const std::vector<double>& priority,
                                 const std::vector<double>& required, const std::vector<double>& actual) {
  const double lo = std::max(t, t0_);
  const double hi = std::min(t + dt, tf_);
  if (hi <= lo) return;
  const double width = hi - lo;
  for (std::size_t i = 0; i < priority.size(); ++i) {
    numerator_ += priority[i] * actual[i] * width;
    denominator_ += priority[i] * required[i] * width;
  }
  ++samples_;
}

double OperabilityAccumulator::value() const {
  if (samples_ == 0) throw TelemetryError("operability: no samples");
  if (!(denominator_ > 0.0)) throw TelemetryError("operability: zero required service");
  return numerator_ / denominator_;
}

void accumulate(OperabilityAccumulator& acc, const plant::PlantConfig& config, const controller::Mission& mission,
                const plant::PlantState& state, double dt) {
  std::vector<double> priority;
  std::vector<double> required;
  std::vector<double> actual;
  for (std::size_t i = 0; i < config.loads.size(); ++i) {
    const auto& spec = config.loads[i];
    if (!spec.controllable) continue;
    const auto it = mission.loads.find(spec.id);
    const controller::LoadMission m = it != mission.loads.end() ? it->second : controller::LoadMission{spec.weight, 1.0};
    priority.push_back(m.weight * state.load_ref[i]);
    required.push_back(m.required);
    actual.push_back(state.violation ? 0.0 : std::min(state.load_status[i], m.required));
  }
  acc.add(state.t, dt, priority, required, actual);
}

// ---------------------------------------------------------------- over-shed

OverShedDetector::OverShedDetector(const plant::Plant& plant, const controller::Controller& controller,
                                   double tolerance_mw)
    : plant_(plant), controller_(controller), tolerance_(tolerance_mw) {}

void OverShedDetector::settle() {
  if (!pending_) return;
  const auto& status = plant_.read_measurements().load_status;
  double actual = 0.0;
  for (std::size_t i = 0; i < pending_truth_.size(); ++i) actual += pending_truth_[i] * status[i];
  pending_->actual_mw = actual;
  samples_.push_back(*pending_);
  pending_.reset();
}

void OverShedDetector::on_cycle_start() {
  settle();
  const auto& state = plant_.read_measurements();
  const auto& layouts = controller_.layouts();
  controller::MeasurementCache truth(layouts.size());
  for (std::size_t d = 0; d < layouts.size(); ++d) {
    truth.offer(d, controller::measurement_from_state(layouts[d], state), 0);
  }
  const auto assembled = controller::assemble_problem(truth, layouts, plant_.config(), controller_.mission(),
                                                      controller_.config(), controller_.previous());
  const auto plan = controller::solve(assembled.problem);
  ShadowSample s;
  s.t = state.t;
  pending_truth_.assign(state.load_ref.size(), 0.0);
  double demand = 0.0;
  for (std::size_t k = 0; k < assembled.plant_load.size(); ++k) {
    const std::size_t i = assembled.plant_load[k];
    pending_truth_[i] = state.load_ref[i];
    s.shadow_mw += state.load_ref[i] * plan.status[k];
    demand += state.load_ref[i] * state.load_status[i];
  }
  s.ample = demand <= assembled.problem.capacity() + 1e-9;
  pending_ = s;
}

void OverShedDetector::finish() { settle(); }

std::vector<Window> OverShedDetector::intervals() const {
  std::vector<Window> out;
  const double period = to_seconds(controller_.config().period);
  bool open = false;
  for (const auto& s : samples_) {
    const bool over = s.ample && s.actual_mw < s.shadow_mw - tolerance_;
    if (over && open) {
      out.back().end = s.t + period;
    } else if (over) {
      out.push_back({s.t, s.t + period});
      open = true;
    } else {
      open = false;
    }
  }
  return out;
}

}  // namespace shipcps::telemetry
