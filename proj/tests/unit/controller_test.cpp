#include <gtest/gtest.h>

#include <cmath>

#include "shipcps/controller/controller.hpp"

using namespace shipcps;
using namespace shipcps::controller;

namespace {

plant::PlantConfig tripped_fleet(double trip_at = 200.0) {
  auto config = plant::notional_plant();
  config.generators[0].trip_events = {{trip_at, false}};
  return config;
}

MeasurementCache snapshot(const std::vector<modbus::DeviceLayout>& layouts, const plant::PlantState& state) {
  MeasurementCache cache(layouts.size());
  for (std::size_t d = 0; d < layouts.size(); ++d) {
    cache.offer(d, measurement_from_state(layouts[d], state), 0);
  }
  return cache;
}

double gen_sum(const ShedProblem& p) {
  double total = 0.0;
  for (double g : p.gen_available) total += g;
  return total;
}

double demand(const ShedProblem& p) {
  double total = 0.0;
  for (const auto& l : p.loads) total += l.ref_mw;
  return total;
}

// Plant stepping at dt plus a lockstep controller on one event queue.
struct SyncLoop {
  netsim::EventQueue q;
  plant::Plant plant;
  Controller controller;
  std::vector<plant::PlantState> states;

  explicit SyncLoop(plant::PlantConfig config, ControllerConfig cc = {})
      : plant(std::move(config)),
        controller(q, plant, modbus::device_layouts(plant.config()),
                   MissionDb::from_plant(plant.config()).at("default"), with_sync(cc)) {
    schedule_step(from_seconds(plant.config().dt));
    controller.start();
  }

  static ControllerConfig with_sync(ControllerConfig cc) {
    cc.mode = Mode::kSynchronous;
    return cc;
  }

  void schedule_step(SimTime at) {
    q.schedule_at(
        at,
        [this] {
          schedule_step(q.now() + from_seconds(plant.config().dt));
          states.push_back(plant.step());
        },
        -1);
  }
};

}  // namespace

TEST(Mission, RejectsBadWeightsAndMissingLoads) {
  MissionDb db;
  EXPECT_THROW(db.add({"m", {{"PMM1", {0.0, 1.0}}}}), ConfigError);
  EXPECT_THROW(db.add({"m", {{"PMM1", {1.0, 1.5}}}}), ConfigError);
  db.add({"m", {{"PMM1", {1.0, 1.0}}}});
  EXPECT_THROW(db.add({"m", {}}), ConfigError);
  EXPECT_THROW(db.validate_against(plant::notional_plant()), ConfigError);
  EXPECT_THROW(db.at("other"), ConfigError);

  auto full = MissionDb::from_plant(plant::notional_plant());
  EXPECT_NO_THROW(full.validate_against(plant::notional_plant()));
  EXPECT_EQ(full.at("default").loads.size(), 28u);
}

TEST(ControllerConfig, Validation) {
  ControllerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.ramp_min = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.beta = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.poll_wait = c.period;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.period = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Cache, OnlyNewerMeasurementsReplace) {
  MeasurementCache cache(1);
  modbus::DecodedMeasurement m;
  m.measured_at = 100;
  m.gen_available = 1.0;
  EXPECT_TRUE(cache.offer(0, m, 5));
  m.measured_at = 50;
  m.gen_available = 2.0;
  EXPECT_FALSE(cache.offer(0, m, 6));
  m.measured_at = 100;
  EXPECT_FALSE(cache.offer(0, m, 7));
  EXPECT_DOUBLE_EQ(cache.entry(0).values->gen_available, 1.0);
  EXPECT_EQ(cache.entry(0).received_at, 5);
  m.measured_at = 101;
  EXPECT_TRUE(cache.offer(0, m, 8));
  EXPECT_DOUBLE_EQ(cache.entry(0).values->gen_available, 2.0);
  EXPECT_EQ(cache.entry(0).rejected_stale, 2u);
}

TEST(Assemble, FreshFleetAtFullDemand) {
  plant::Plant plant(plant::notional_plant());
  for (int k = 0; k < 40000; ++k) plant.step();  // propulsion at rating by 400 s
  const auto layouts = modbus::device_layouts(plant.config());
  const auto cache = snapshot(layouts, plant.read_measurements());
  const auto mission = MissionDb::from_plant(plant.config()).at("default");
  const auto a = assemble_problem(cache, layouts, plant.config(), mission, {}, {});
  EXPECT_NEAR(gen_sum(a.problem), 79.0, 1e-9);
  EXPECT_NEAR(demand(a.problem), 68.0, 1e-9);
  EXPECT_TRUE(a.warnings.empty());
  ASSERT_EQ(a.problem.loads.size(), 28u);
  // Loads keep their device index, so propulsion modules sit at 12..15.
  EXPECT_EQ(a.problem.loads.back().device_index, 15u);
  EXPECT_EQ(a.plant_load.back(), plant.load_index("PMM4"));
}

TEST(Assemble, ReportedTripAndSpoofedDemandAreUsedVerbatim) {
  plant::Plant plant(tripped_fleet(0.0));
  const auto layouts = modbus::device_layouts(plant.config());
  auto cache = snapshot(layouts, plant.step());
  const auto mission = MissionDb::from_plant(plant.config()).at("default");
  EXPECT_NEAR(gen_sum(assemble_problem(cache, layouts, plant.config(), mission, {}, {}).problem), 44.0, 1e-9);

  auto spoofed = *cache.entry(15).values;
  spoofed.load_ref[0] = 0.0;
  spoofed.measured_at += 1;
  ASSERT_TRUE(cache.offer(15, spoofed, 1));
  const auto a = assemble_problem(cache, layouts, plant.config(), mission, {}, {});
  EXPECT_DOUBLE_EQ(a.problem.loads.back().ref_mw, 0.0);
}

TEST(Assemble, SilentDeviceIsExcludedWithWarning) {
  plant::Plant plant(plant::notional_plant());
  const auto layouts = modbus::device_layouts(plant.config());
  MeasurementCache cache(layouts.size());
  for (std::size_t d = 0; d < layouts.size(); ++d) {
    if (d == 0 || d == 12) continue;  // MTG1 and PMM1 never answered
    cache.offer(d, measurement_from_state(layouts[d], plant.read_measurements()), 0);
  }
  const auto mission = MissionDb::from_plant(plant.config()).at("default");
  const auto a = assemble_problem(cache, layouts, plant.config(), mission, {}, {});
  EXPECT_EQ(a.warnings.size(), 2u);
  EXPECT_NEAR(gen_sum(a.problem), 44.0, 1e-9);
  EXPECT_EQ(a.problem.loads.size(), 27u);
  for (std::size_t i : a.plant_load) EXPECT_NE(i, plant.load_index("PMM1"));
}

TEST(Assemble, PreviousPlanFeedsRampAndSwitching) {
  plant::Plant plant(plant::notional_plant());
  const auto layouts = modbus::device_layouts(plant.config());
  const auto cache = snapshot(layouts, plant.read_measurements());
  const auto mission = MissionDb::from_plant(plant.config()).at("default");
  PreviousPlan prev;
  prev.status.assign(plant.config().loads.size(), std::nan(""));
  prev.ref_mw.assign(plant.config().loads.size(), 0.0);
  const std::size_t pmm2 = plant.load_index("PMM2");
  prev.status[pmm2] = 0.5;
  prev.ref_mw[pmm2] = 5.0;
  const auto a = assemble_problem(cache, layouts, plant.config(), mission, {}, prev);
  for (std::size_t k = 0; k < a.plant_load.size(); ++k) {
    const auto& l = a.problem.loads[k];
    if (a.plant_load[k] == pmm2) {
      EXPECT_DOUBLE_EQ(l.prev_status, 0.5);
      EXPECT_DOUBLE_EQ(l.prev_ref_mw, 5.0);
    } else {
      EXPECT_DOUBLE_EQ(l.prev_status, 1.0);
      EXPECT_DOUBLE_EQ(l.prev_ref_mw, l.ref_mw);
    }
  }
}

TEST(Assemble, DigestTracksInputs) {
  plant::Plant plant(plant::notional_plant());
  const auto layouts = modbus::device_layouts(plant.config());
  const auto cache = snapshot(layouts, plant.read_measurements());
  const auto mission = MissionDb::from_plant(plant.config()).at("default");
  auto a = assemble_problem(cache, layouts, plant.config(), mission, {}, {});
  const auto h = digest(a.problem);
  EXPECT_EQ(h, digest(assemble_problem(cache, layouts, plant.config(), mission, {}, {}).problem));
  a.problem.loads[3].ref_mw += 1e-6;
  EXPECT_NE(h, digest(a.problem));
}

TEST(SyncController, NoContingencyNeverSheds) {
  SyncLoop loop(plant::notional_plant());
  loop.q.run_until(from_seconds(500.0));
  EXPECT_EQ(loop.controller.log().size(), 501u);
  for (const auto& s : loop.states) {
    EXPECT_FALSE(s.violation);
    for (double o : s.load_status) ASSERT_DOUBLE_EQ(o, 1.0);
  }
}

TEST(SyncController, TripAndRampShedTwoPropulsionModules) {
  SyncLoop loop(tripped_fleet());
  loop.q.run_until(from_seconds(500.0));
  const auto& config = loop.plant.config();
  const double dt = config.dt;

  // The trip deficit appears at 200 s and the cycle at 200 s reacts; the
  // command lands one step later.
  std::vector<std::pair<double, double>> windows;
  for (const auto& s : loop.states) {
    if (!s.violation) continue;
    if (windows.empty() || s.t > windows.back().second + dt * 1.5) windows.push_back({s.t, s.t});
    windows.back().second = s.t;
  }
  for (const auto& [a, b] : windows) EXPECT_LE(b - a + dt, 1.0 + dt + 1e-9);

  std::map<std::string, double> least;
  for (const auto& s : loop.states) {
    for (std::size_t i = 0; i < config.loads.size(); ++i) {
      auto [it, _] = least.try_emplace(config.loads[i].id, 1.0);
      it->second = std::min(it->second, s.load_status[i]);
    }
  }
  for (const auto& [id, o] : least) {
    if (id.rfind("PMM", 0) == 0) continue;
    EXPECT_DOUBLE_EQ(o, 1.0) << id;
  }
  EXPECT_DOUBLE_EQ(least["PMM1"], 0.0);
  EXPECT_DOUBLE_EQ(least["PMM2"], 0.0);
  EXPECT_DOUBLE_EQ(least["PMM3"], 1.0);
  EXPECT_DOUBLE_EQ(least["PMM4"], 1.0);

  // Every plan honours the reserve with the inputs it was computed from.
  for (const auto& c : loop.controller.log()) {
    EXPECT_FALSE(c.infeasible);
    EXPECT_FALSE(c.starved);
  }
}

TEST(SyncController, HaltedControllerDoesNotAct) {
  SyncLoop loop(tripped_fleet(10.0));
  loop.q.run_until(from_seconds(5.0));
  loop.controller.set_halted(true);
  loop.q.run_until(from_seconds(20.0));
  EXPECT_TRUE(loop.controller.log().back().halted);
  // 8 + 24 MW of demand stays under 44 MW, so halting is harmless here.
  EXPECT_FALSE(loop.states.back().violation);
}
