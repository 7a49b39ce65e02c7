#include <gtest/gtest.h>

#include <cmath>

#include "shipcps/faultgen/faultgen.hpp"

using namespace shipcps;
using namespace shipcps::faultgen;

namespace {

struct Bench {
  netsim::EventQueue q;
  plant::Plant plant{plant::notional_plant()};
  netsim::Network net{q, netsim::ship_topology({}, {{"PMM1", 1}, {"PMM4", 4}}, false)};
  netsim::Transport dev{net.host("PMM1")};
  modbus::Gateway gateway{dev, plant, modbus::device_layouts(plant.config())[12], {}};
  FaultInjector injector{net, {{"PMM1", &gateway}}};
};

FaultSpec delay(std::vector<std::string> links, double delta, double start, double end) {
  FaultSpec f;
  f.kind = FaultKind::kExtraDelay;
  f.links = std::move(links);
  f.delta_s = delta;
  f.start_s = start;
  f.end_s = end;
  return f;
}

}  // namespace

TEST(Faultgen, KindNamesRoundTrip) {
  for (auto k : {FaultKind::kExtraDelay, FaultKind::kLoss, FaultKind::kReportingRate}) {
    EXPECT_EQ(parse_fault_kind(to_string(k)), k);
  }
  EXPECT_FALSE(parse_fault_kind("jitter"));
}

TEST(Faultgen, ValidationDiagnostics) {
  Bench b;
  auto expect_error = [&](const FaultSpec& f, const std::string& needle) {
    try {
      b.injector.schedule(f);
      ADD_FAILURE() << "accepted " << needle;
    } catch (const FaultError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error(delay({"access:PMM1"}, 1.0, 370, 295), "window end before start");
  expect_error(delay({"access:nowhere"}, 1.0, 1, 2), "unknown link access:nowhere");
  expect_error(delay({}, 1.0, 1, 2), "no links");
  expect_error(delay({"access:PMM1"}, -1.0, 1, 2), "delta");
  FaultSpec loss = delay({"access:PMM1"}, 0, 1, 2);
  loss.kind = FaultKind::kLoss;
  loss.probability = 1.5;
  expect_error(loss, "probability");
  FaultSpec rate;
  rate.kind = FaultKind::kReportingRate;
  rate.devices = {"PMM9"};
  rate.start_s = 1;
  rate.end_s = 2;
  expect_error(rate, "unknown device PMM9");
  EXPECT_NO_THROW(b.injector.schedule(delay({"access:PMM1>"}, 1.0, 1, 2)));
}

TEST(Faultgen, DelayLastsExactlyTheWindowAndComposes) {
  Bench b;
  auto& link = b.net.link("access:PMM4");
  const SimTime base = link.forward.propagation_delay();
  b.injector.schedule(delay({"access:PMM4"}, 1.0, 10, 20));
  b.injector.schedule(delay({"access:PMM4<"}, 2.0, 15, 25));
  b.q.run_until(from_seconds(10) - 1);
  EXPECT_EQ(link.forward.propagation_delay(), base);
  b.q.run_until(from_seconds(10));
  EXPECT_EQ(link.forward.propagation_delay(), base + from_seconds(1));
  EXPECT_EQ(link.reverse.propagation_delay(), base + from_seconds(1));
  b.q.run_until(from_seconds(16));
  EXPECT_EQ(link.forward.propagation_delay(), base + from_seconds(1));
  EXPECT_EQ(link.reverse.propagation_delay(), base + from_seconds(3));
  EXPECT_EQ(b.injector.active(), 2u);
  b.q.run_until(from_seconds(20));
  EXPECT_EQ(link.forward.propagation_delay(), base);
  EXPECT_EQ(link.reverse.propagation_delay(), base + from_seconds(2));
  b.q.run_until(from_seconds(30));
  EXPECT_EQ(link.reverse.propagation_delay(), base);
  EXPECT_EQ(b.injector.applied(), 2u);
  EXPECT_EQ(b.injector.cleared(), 2u);
}

TEST(Faultgen, LossCountIsBinomial) {
  Bench b;
  FaultSpec f = delay({"access:PMM1>"}, 0, 0, 1000);
  f.kind = FaultKind::kLoss;
  f.probability = 0.1;
  f.seed = 7;
  b.injector.schedule(f);
  b.q.run_until(0);
  auto& dir = b.net.link("access:PMM1").forward;
  netsim::Frame frame;
  frame.dst = netsim::MacAddress::broadcast();
  netsim::ArpMessage arp;
  frame.ethertype = netsim::EtherType::kArp;
  frame.payload = arp;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    dir.transmit(frame);
    b.q.run_until(b.q.now() + millis(1));
  }
  const double mean = n * 0.1;
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  EXPECT_NEAR(static_cast<double>(dir.dropped_loss()), mean, 3 * sigma);
  EXPECT_EQ(dir.dropped_loss() + dir.delivered(), static_cast<std::uint64_t>(n));
}

TEST(Faultgen, ReportingRateOverridesAndRestoresPeriod) {
  Bench b;
  b.gateway.start();
  FaultSpec f;
  f.kind = FaultKind::kReportingRate;
  f.devices = {"PMM1"};
  f.period_s = 0.001;
  f.start_s = 1.0;
  f.end_s = 2.0;
  b.injector.schedule(f);
  b.q.run_until(from_seconds(1) - 1);
  const auto before = b.gateway.refreshes();
  EXPECT_EQ(before, 10u);
  b.q.run_until(from_seconds(2) - 1);
  EXPECT_EQ(b.gateway.period(), millis(1));
  EXPECT_NEAR(static_cast<double>(b.gateway.refreshes() - before), 1000.0, 2.0);
  b.q.run_until(from_seconds(2));
  EXPECT_EQ(b.gateway.period(), millis(100));
  const auto after = b.gateway.refreshes();
  b.q.run_until(from_seconds(3));
  EXPECT_EQ(b.gateway.refreshes() - after, 10u);
}
