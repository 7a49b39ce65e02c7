#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "shipcps/controller/controller.hpp"
#include "shipcps/netsim/network.hpp"
#include "shipcps/plant.hpp"

namespace shipcps::telemetry {

class TelemetryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- packets

enum class Direction { kTx, kRx, kDrop };

std::string_view to_string(Direction direction);

struct ModbusSummary {
  std::uint16_t transaction_id = 0;
  std::uint8_t function = 0;
  std::uint8_t unit_id = 0;
};

struct PacketTraceRecord {
  SimTime time = 0;
  std::string node;  // host name, or link direction id for drops
  Direction direction = Direction::kTx;
  std::string protocol;  // "tcp", "udp" or "arp"
  netsim::Ipv4Address src;
  netsim::Ipv4Address dst;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::size_t size = 0;     // bytes on the wire
  std::size_t payload = 0;  // transport payload bytes
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  std::optional<ModbusSummary> modbus;
  netsim::Disposition disposition = netsim::Disposition::kDelivered;
  std::string drop_reason;
  std::uint64_t frame_id = 0;
};

PacketTraceRecord make_record(SimTime time, std::string node, Direction direction,
                              const netsim::Frame& frame, netsim::Disposition disposition);

// One JSON object per line with a fixed field order.
std::string canonical(const PacketTraceRecord& record);

// 64-bit FNV-1a, streamable.
class Fnv1a {
 public:
  void update(std::string_view bytes);
  std::uint64_t value() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 14695981039346656037ull;
};

// Records every frame sent, received or dropped at host level.
class TraceRecorder {
 public:
  void attach(netsim::Network& network);
  // Optional line sink; the hash covers exactly the lines written.
  void set_sink(std::ostream* sink) { sink_ = sink; }
  void set_keep_records(bool keep) { keep_ = keep; }
  // Only records passing the filter are kept; all are hashed.
  void set_keep_filter(std::function<bool(const PacketTraceRecord&)> filter) { keep_filter_ = std::move(filter); }
  // Sees every record, kept or not.
  void set_observer(std::function<void(const PacketTraceRecord&)> observer) { observer_ = std::move(observer); }

  void add(PacketTraceRecord record);
  const std::vector<PacketTraceRecord>& records() const { return records_; }
  std::uint64_t count() const { return count_; }
  std::string hash() const { return hash_.hex(); }

 private:
  std::ostream* sink_ = nullptr;
  bool keep_ = true;
  std::function<bool(const PacketTraceRecord&)> keep_filter_;
  std::function<void(const PacketTraceRecord&)> observer_;
  std::vector<PacketTraceRecord> records_;
  std::uint64_t count_ = 0;
  Fnv1a hash_;
};

// Selects records; unset fields match anything.
struct FlowFilter {
  std::optional<std::string> node;
  std::optional<Direction> direction;
  std::optional<std::string> protocol;
  std::optional<std::uint16_t> port;  // either end
  std::optional<netsim::Ipv4Address> src;
  std::optional<netsim::Ipv4Address> dst;
  bool modbus_only = false;

  bool matches(const PacketTraceRecord& r) const;
};

struct RttSample {
  SimTime at = 0;   // acknowledgement time
  SimTime rtt = 0;  // from first transmission of the acknowledged segment
  netsim::Ipv4Address remote;
};

// Pairs data segments sent by `node` to `remote_port` with the first
// cumulative acknowledgement that covers them. Retransmissions count from the
// original send.
std::vector<RttSample> rtt_series(const std::vector<PacketTraceRecord>& records, const std::string& node,
                                  std::uint16_t remote_port);

// NaN when no sample falls in [from, to).
double mean_rtt_seconds(const std::vector<RttSample>& samples, SimTime from, SimTime to);

enum class ByteMeasure { kWire, kPayload };

// Bytes per second of delivered (non-dropped) matching records, per window
// over [from, to).
std::vector<double> throughput(const std::vector<PacketTraceRecord>& records, const FlowFilter& filter,
                               SimTime from, SimTime to, SimTime window = kNanosPerSecond,
                               ByteMeasure measure = ByteMeasure::kWire);

enum class GroupBy { kSource, kDisposition };

// Matching record counts per key per window over [from, to).
std::map<std::string, std::vector<std::uint64_t>> packet_counts(const std::vector<PacketTraceRecord>& records,
                                                                const FlowFilter& filter, GroupBy group,
                                                                SimTime from, SimTime to,
                                                                SimTime window = kNanosPerSecond);

// ---------------------------------------------------------------- plant

struct Window {
  double start = 0.0;
  double end = 0.0;
  double length() const { return end - start; }
};

// Maximal runs of samples with served > available; each sample stands for
// [t, t + dt).
std::vector<Window> violation_windows(const std::vector<plant::PlantState>& log, double dt);

bool overlaps(const Window& w, double start, double end);

class OperabilityAccumulator {
 public:
  OperabilityAccumulator(double t0, double tf) : t0_(t0), tf_(tf) {}

  // One rectangle of width dt starting at t; samples outside [t0, tf) are
  // clipped. Priorities are w * reference power.
  void add(double t, double dt, const std::vector<double>& priority, const std::vector<double>& required,
           const std::vector<double>& actual);

  double value() const;
  double numerator() const { return numerator_; }
  double denominator() const { return denominator_; }
  std::uint64_t samples() const { return samples_; }

 private:
  double t0_;
  double tf_;
  double numerator_ = 0.0;
  double denominator_ = 0.0;
  std::uint64_t samples_ = 0;
};

// Feeds a plant step into the accumulator using a mission's weights. Loads
// count as unserved while the plant is in violation.
void accumulate(OperabilityAccumulator& acc, const plant::PlantConfig& config,
                const controller::Mission& mission, const plant::PlantState& state, double dt);

// ---------------------------------------------------------------- over-shed

struct ShadowSample {
  double t = 0.0;
  double shadow_mw = 0.0;  // service of the plan computed from true values
  double actual_mw = 0.0;  // service of the statuses in force one period later
  bool ample = false;      // true demand fits the reserve-adjusted capacity
};

// Re-solves every controller cycle from plant truth with the controller's own
// previous plan, then compares with what the plant actually ran.
class OverShedDetector {
 public:
  OverShedDetector(const plant::Plant& plant, const controller::Controller& controller, double tolerance_mw = 1e-3);

  // Call at each cycle start, before the controller decides.
  void on_cycle_start();
  // Finalizes the last pending sample.
  void finish();

  const std::vector<ShadowSample>& samples() const { return samples_; }
  // Cycles where the plant served less than the shadow plan with ample capacity.
  std::vector<Window> intervals() const;

 private:
  void settle();

  const plant::Plant& plant_;
  const controller::Controller& controller_;
  double tolerance_;
  std::optional<ShadowSample> pending_;
  std::vector<double> pending_truth_;
  std::vector<ShadowSample> samples_;
};

}  // namespace shipcps::telemetry
