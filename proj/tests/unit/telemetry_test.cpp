#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "shipcps/modbus/endpoint.hpp"
#include "shipcps/telemetry/telemetry.hpp"

using namespace shipcps;
using namespace shipcps::telemetry;

namespace {

double run_operability(const std::vector<double>& w, bool shed_second, double scale = 1.0) {
  OperabilityAccumulator acc(0.0, 10.0);
  const double dt = 0.01;
  for (int k = 0; k < 1000; ++k) {
    const double t = k * dt;
    std::vector<double> priority = {w[0] * scale, w[1] * scale};
    std::vector<double> actual = {1.0, shed_second && t >= 5.0 - 1e-12 ? 0.0 : 1.0};
    acc.add(t, dt, priority, {1.0, 1.0}, actual);
  }
  return acc.value();
}

struct Bench {
  netsim::EventQueue q;
  plant::Plant plant{plant::notional_plant()};
  netsim::Network net{q, netsim::ship_topology({}, {{"PMM1", 1}}, false)};
  TraceRecorder trace;
  netsim::Transport ctrl{net.host(netsim::kControllerNode)};
  netsim::Transport dev{net.host("PMM1")};
  modbus::Gateway gateway{dev, plant, modbus::device_layouts(plant.config())[12], {}};
  modbus::Master master{ctrl};

  Bench() {
    trace.attach(net);
    gateway.start();
  }
  void polls(int n) {
    for (int k = 0; k < n; ++k) {
      master.read(net.host("PMM1").ip(), 13, modbus::function::kReadInput, 0, 4, nullptr);
      q.run_until(q.now() + millis(100));
    }
  }
};

}  // namespace

TEST(Operability, TwoLoadClosedForm) {
  EXPECT_NEAR(run_operability({2.0, 1.0}, true), 25.0 / 30.0, 1e-9);
}

TEST(Operability, FullServiceIsOneAndScaleFree) {
  EXPECT_NEAR(run_operability({2.0, 1.0}, false), 1.0, 1e-12);
  EXPECT_NEAR(run_operability({2.0, 1.0}, true, 1234.5), 25.0 / 30.0, 1e-9);
}

TEST(Operability, AllShedIsZeroAndEmptyIsError) {
  OperabilityAccumulator acc(0.0, 1.0);
  EXPECT_THROW(acc.value(), TelemetryError);
  acc.add(0.0, 1.0, {1.0}, {1.0}, {0.0});
  EXPECT_DOUBLE_EQ(acc.value(), 0.0);
  OperabilityAccumulator none(0.0, 1.0);
  none.add(0.0, 1.0, {1.0}, {0.0}, {0.0});
  EXPECT_THROW(none.value(), TelemetryError);
}

TEST(Operability, ClipsToWindow) {
  OperabilityAccumulator acc(1.0, 2.0);
  acc.add(0.5, 1.0, {1.0}, {1.0}, {0.0});  // half inside
  acc.add(1.5, 1.0, {1.0}, {1.0}, {1.0});  // half inside
  acc.add(3.0, 1.0, {1.0}, {1.0}, {0.0});  // outside
  EXPECT_DOUBLE_EQ(acc.value(), 0.5);
}

TEST(Operability, ViolationCountsAsUnserved) {
  auto config = plant::notional_plant();
  const auto mission = controller::MissionDb::from_plant(config).at("default");
  plant::Plant plant(config);
  auto state = plant.step();
  OperabilityAccumulator ok(0.0, 1.0);
  accumulate(ok, config, mission, state, 0.01);
  EXPECT_DOUBLE_EQ(ok.value(), 1.0);
  state.violation = true;
  OperabilityAccumulator bad(0.0, 1.0);
  accumulate(bad, config, mission, state, 0.01);
  EXPECT_DOUBLE_EQ(bad.value(), 0.0);
}

TEST(Violations, WindowsCoverViolatingSteps) {
  std::vector<plant::PlantState> log(10);
  for (int k = 0; k < 10; ++k) {
    log[k].t = k * 0.5;
    log[k].violation = (k >= 2 && k <= 4) || k == 9;
  }
  const auto w = violation_windows(log, 0.5);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_DOUBLE_EQ(w[0].start, 1.0);
  EXPECT_DOUBLE_EQ(w[0].end, 2.5);
  EXPECT_DOUBLE_EQ(w[1].length(), 0.5);
  EXPECT_TRUE(overlaps(w[0], 2.0, 3.0));
  EXPECT_FALSE(overlaps(w[0], 2.5, 3.0));
  EXPECT_TRUE(violation_windows({}, 0.01).empty());
}

TEST(Trace, HashIsFnv1aOfCanonicalLines) {
  Fnv1a empty;
  EXPECT_EQ(empty.hex(), "cbf29ce484222325");
  Fnv1a a;
  a.update("a");
  EXPECT_EQ(a.hex(), "af63dc4c8601ec8c");

  Bench b;
  std::ostringstream sink;
  b.trace.set_sink(&sink);
  b.polls(5);
  Fnv1a again;
  again.update(sink.str());
  EXPECT_EQ(again.hex(), b.trace.hash());
  EXPECT_EQ(b.trace.count(), b.trace.records().size());
  std::size_t modbus = 0;
  for (const auto& r : b.trace.records()) modbus += r.modbus.has_value();
  EXPECT_GT(modbus, 0u);
  EXPECT_NE(sink.str().find("\"modbus\":{\"tid\":1,\"fn\":4,\"unit\":13}"), std::string::npos);
}

TEST(Trace, IdenticalRunsHashIdentically) {
  Bench a;
  Bench b;
  a.polls(20);
  b.polls(20);
  EXPECT_EQ(a.trace.hash(), b.trace.hash());
  Bench c;
  c.polls(19);
  EXPECT_NE(a.trace.hash(), c.trace.hash());
}

TEST(Trace, RttMatchesPathDelay) {
  Bench b;
  b.polls(10);
  const auto rtt = rtt_series(b.trace.records(), netsim::kControllerNode, modbus::kPort);
  ASSERT_EQ(rtt.size(), 10u);
  const SimTime two_way = 2 * b.net.path_delay(netsim::kControllerNode, "PMM1");
  // The first poll waits for two ARP exchanges.
  for (std::size_t k = 1; k < rtt.size(); ++k) {
    EXPECT_GE(rtt[k].rtt, two_way);
    EXPECT_LE(rtt[k].rtt, two_way + millis(1));
  }
  EXPECT_GT(mean_rtt_seconds(rtt, 0, from_seconds(10)), to_seconds(two_way));
  EXPECT_TRUE(rtt_series(b.trace.records(), netsim::kControllerNode, 8080).empty());
}

TEST(Trace, ThroughputConservesBytes) {
  Bench b;
  b.polls(30);
  FlowFilter rx;
  rx.node = netsim::kControllerNode;
  rx.direction = Direction::kRx;
  double total = 0.0;
  for (const auto& r : b.trace.records()) {
    if (rx.matches(r) && r.disposition != netsim::Disposition::kDropped) total += static_cast<double>(r.size);
  }
  const auto series = throughput(b.trace.records(), rx, 0, from_seconds(3), millis(250));
  EXPECT_EQ(series.size(), 12u);
  EXPECT_NEAR(std::accumulate(series.begin(), series.end(), 0.0) * 0.25, total, 1e-6);
  FlowFilter idle = rx;
  idle.port = 8080;
  for (double v : throughput(b.trace.records(), idle, 0, from_seconds(3))) EXPECT_EQ(v, 0.0);
}

TEST(Trace, CountsGroupBySource) {
  Bench b;
  b.polls(10);
  FlowFilter rx;
  rx.node = netsim::kControllerNode;
  rx.direction = Direction::kRx;
  rx.protocol = "tcp";
  const auto counts = packet_counts(b.trace.records(), rx, GroupBy::kSource, 0, from_seconds(1));
  ASSERT_EQ(counts.size(), 1u);
  EXPECT_EQ(counts.begin()->first, b.net.host("PMM1").ip().str());
  const auto& bins = counts.begin()->second;
  // Each poll brings a pure acknowledgement of the request and the reply.
  EXPECT_EQ(std::accumulate(bins.begin(), bins.end(), std::uint64_t{0}), 20u);
  rx.modbus_only = true;
  const auto replies = packet_counts(b.trace.records(), rx, GroupBy::kSource, 0, from_seconds(1));
  const auto& rbins = replies.begin()->second;
  EXPECT_EQ(std::accumulate(rbins.begin(), rbins.end(), std::uint64_t{0}), 10u);
}
