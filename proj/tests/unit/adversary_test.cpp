#include <gtest/gtest.h>

#include <numeric>

#include "shipcps/adversary/adversary.hpp"
#include "shipcps/modbus/endpoint.hpp"

using namespace shipcps;
using namespace shipcps::adversary;
using modbus::Outcome;

namespace {

// Controller plus two zone-4 devices (PMM4 and LC41) and the attacker.
struct Bench {
  netsim::EventQueue q;
  plant::Plant plant{plant::notional_plant()};
  std::vector<modbus::DeviceLayout> layouts = modbus::device_layouts(plant.config());
  netsim::Network net{q, netsim::ship_topology({}, {{"PMM4", 4}, {"LC41", 4}}, true)};
  netsim::Transport ctrl{net.host(netsim::kControllerNode)};
  netsim::Transport pmm_t{net.host("PMM4")};
  netsim::Transport lc_t{net.host("LC41")};
  modbus::Gateway pmm{pmm_t, plant, layout("PMM4"), {}};
  modbus::Gateway lc{lc_t, plant, layout("LC41"), {}};
  modbus::Master master{ctrl};

  Bench() {
    pmm.start();
    lc.start();
  }
  modbus::DeviceLayout layout(const std::string& name) const {
    for (const auto& l : layouts) {
      if (l.name == name) return l;
    }
    throw std::logic_error(name);
  }
  netsim::Ipv4Address ip(const std::string& name) { return net.host(name).ip(); }
  netsim::Host& attacker() { return net.host(netsim::kAttackerNode); }

  // Polls a device once per 100 ms over [from, to) and collects outcomes.
  std::vector<Outcome> poll(const std::string& name, double from, double to) {
    std::vector<Outcome> out;
    const auto l = layout(name);
    for (SimTime t = std::max(q.now(), from_seconds(from)); t < from_seconds(to); t += millis(100)) {
      q.run_until(t);
      master.read(ip(name), l.unit_id, modbus::function::kReadInput, 0, l.input_registers_used(),
                  [&out](const Outcome& o) { out.push_back(o); });
    }
    q.run_until(from_seconds(to) + millis(500));
    return out;
  }

  MitmSpec mitm(double start, double end) {
    MitmSpec s;
    s.victim_a = ip("PMM4");
    s.victim_b = ip(netsim::kControllerNode);
    s.rewrite = {layout("PMM4").unit_id, 2, 2, 0};
    s.start_s = start;
    s.end_s = end;
    return s;
  }
};

double mean_age_ms(const std::vector<Outcome>& v) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& o : v) {
    if (o.kind != Outcome::Kind::kValues) continue;
    total += to_seconds(o.age) * 1e3;
    ++n;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

}  // namespace

TEST(Mitm, ValidationRejectsBadSpecs) {
  Bench b;
  auto s = b.mitm(325, 295);
  EXPECT_THROW(MitmAttack(b.attacker(), s), AttackError);
  s = b.mitm(1, 2);
  s.victim_a = b.ip(netsim::kControllerNode);  // not on the attacker's LAN
  EXPECT_THROW(MitmAttack(b.attacker(), s), AttackError);
  s = b.mitm(1, 2);
  s.victim_b = netsim::Ipv4Address::from_octets(10, 9, 9, 9);
  EXPECT_THROW(MitmAttack(b.attacker(), s), AttackError);
  s = b.mitm(1, 2);
  MitmAttack ok(b.attacker(), s);
  EXPECT_EQ(ok.peer(), netsim::lan_gateway_address(4));
}

TEST(Mitm, RewritesDeviceReadingsOnlyInsideWindow) {
  Bench b;
  MitmAttack attack(b.attacker(), b.mitm(2.0, 4.0));
  attack.schedule();
  const auto before = b.poll("PMM4", 0.5, 2.0);
  const auto during = b.poll("PMM4", 2.5, 4.0);
  const auto after = b.poll("PMM4", 5.0, 6.0);
  const std::uint16_t truth = modbus::encode_kw(6.0);
  for (const auto* set : {&before, &during, &after}) {
    ASSERT_FALSE(set->empty());
    for (const auto& o : *set) ASSERT_EQ(o.kind, Outcome::Kind::kValues);
  }
  for (const auto& o : before) EXPECT_EQ(o.values[2], truth);
  for (const auto& o : during) {
    EXPECT_EQ(o.values[2], 0);
    EXPECT_EQ(o.values[3], 1000);  // outside the rewrite range
  }
  for (const auto& o : after) EXPECT_EQ(o.values[2], truth);
  EXPECT_GT(attack.stats().modified, 0u);
  EXPECT_GT(attack.stats().poison_frames, 0u);
  EXPECT_EQ(attack.stats().restore_frames, 2u);
  EXPECT_EQ(attack.stats().decode_failures, 0u);
  EXPECT_FALSE(attack.active());
}

TEST(Mitm, UnrelatedDeviceIsUntouched) {
  Bench b;
  MitmAttack attack(b.attacker(), b.mitm(1.0, 3.0));
  attack.schedule();
  const auto during = b.poll("LC41", 1.5, 3.0);
  ASSERT_FALSE(during.empty());
  for (const auto& o : during) {
    ASSERT_EQ(o.kind, Outcome::Kind::kValues);
    EXPECT_EQ(o.values[2], modbus::encode_kw(0.65));
  }
  EXPECT_EQ(attack.stats().modified, 0u);
}

TEST(Mitm, PoisonedRouterMapsDeviceToAttacker) {
  Bench b;
  MitmAttack attack(b.attacker(), b.mitm(1.0, 3.0));
  attack.schedule();
  b.poll("PMM4", 0.2, 2.0);
  auto& r4 = b.net.router(4);
  std::optional<netsim::MacAddress> seen;
  for (auto& iface : r4.interfaces()) {
    if (iface.lan) seen = iface.arp.lookup(b.ip("PMM4"));
  }
  ASSERT_TRUE(seen);
  EXPECT_EQ(*seen, b.attacker().mac());
  EXPECT_EQ(b.net.host("PMM4").arp().lookup(netsim::lan_gateway_address(4)), b.attacker().mac());
  b.q.run_until(from_seconds(3.5));
  EXPECT_EQ(b.net.host("PMM4").arp().lookup(netsim::lan_gateway_address(4)), r4.interfaces()[0].mac);
}

TEST(Dos, FloodSendsPlannedCountAndStarvesPolls) {
  Bench b;
  DosSpec s;
  s.target = b.ip(netsim::kControllerNode);
  s.start_s = 2.0;
  s.end_s = 4.0;
  s.seed = 3;
  DosAttack attack(b.attacker(), s);
  attack.schedule();
  const auto before = b.poll("PMM4", 0.5, 1.5);
  const auto& down = b.net.link("access:controller").reverse;
  const auto drops_before = down.dropped_queue();
  const auto during = b.poll("PMM4", 2.2, 4.0);
  EXPECT_EQ(attack.stats().sent, 20000u);
  EXPECT_GT(down.dropped_queue(), drops_before + 1000);
  const double pre = mean_age_ms(before);
  std::size_t failed = 0;
  for (const auto& o : during) failed += o.kind != Outcome::Kind::kValues;
  EXPECT_GT(pre, 0.0);
  // Either most polls fail outright or the survivors are much slower.
  EXPECT_TRUE(failed * 2 > during.size() || mean_age_ms(during) >= 5 * pre)
      << failed << "/" << during.size() << " pre " << pre << " during " << mean_age_ms(during);
  const auto after = b.poll("PMM4", 5.0, 6.0);
  for (const auto& o : after) EXPECT_EQ(o.kind, Outcome::Kind::kValues);
}

TEST(Dos, TrickleIsHarmless) {
  Bench b;
  DosSpec s;
  s.target = b.ip(netsim::kControllerNode);
  s.rate_pps = 1.0;
  s.start_s = 1.0;
  s.end_s = 5.0;
  DosAttack attack(b.attacker(), s);
  attack.schedule();
  b.poll("PMM4", 0.2, 1.0);  // warm ARP
  const auto quiet = b.poll("PMM4", 1.0, 5.0);
  for (const auto& o : quiet) ASSERT_EQ(o.kind, Outcome::Kind::kValues);
  const SimTime two_way = 2 * b.net.path_delay(netsim::kControllerNode, "PMM4");
  for (const auto& o : quiet) EXPECT_LE(o.age, two_way + millis(2));
  EXPECT_EQ(attack.stats().sent, 4u);
}

TEST(Dos, ValidationRejectsBadSpecs) {
  Bench b;
  DosSpec s;
  s.target = b.ip(netsim::kControllerNode);
  s.start_s = 370;
  s.end_s = 295;
  EXPECT_THROW(DosAttack(b.attacker(), s), AttackError);
  s.start_s = 1;
  s.end_s = 2;
  s.rate_pps = 0;
  EXPECT_THROW(DosAttack(b.attacker(), s), AttackError);
  s.rate_pps = 10;
  s.target = netsim::Ipv4Address::from_octets(10, 0, 0, 99);
  EXPECT_THROW(DosAttack(b.attacker(), s), AttackError);
}
