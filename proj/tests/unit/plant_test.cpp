#include <gtest/gtest.h>

#include <random>

#include "shipcps/plant.hpp"

using namespace shipcps::plant;

namespace {

PlantConfig flat_fleet() {
  PlantConfig config = notional_plant();
  for (auto& l : config.loads) l.demand = PiecewiseLinear::constant(l.rated_mw);
  return config;
}

}  // namespace

TEST(Plant, NotionalCapacityIs79Mw) {
  Plant plant(notional_plant());
  EXPECT_DOUBLE_EQ(plant.capacity_mw(), 79.0);
  EXPECT_EQ(plant.config().generators.size(), 4u);
  EXPECT_EQ(plant.config().loads.size(), 8u * 3u + 4u);
}

TEST(Plant, NotionalFullDemandIs68Mw) {
  Plant plant(flat_fleet());
  EXPECT_NEAR(plant.step().served_mw, 68.0, 1e-9);
}

TEST(Plant, LoadCentersSplitOneMegawatt) {
  const auto config = notional_plant();
  double lc11 = 0.0;
  for (const auto& l : config.loads) {
    if (l.device == "LC11") lc11 += l.rated_mw;
  }
  EXPECT_NEAR(lc11, 1.0, 1e-12);
}

TEST(Plant, MissionLoadsAreOptIn) {
  NotionalOptions options;
  options.include_mission_loads = true;
  const auto config = notional_plant(options);
  EXPECT_EQ(config.loads.size(), 32u);
  EXPECT_FALSE(config.loads.back().controllable);
}

TEST(Plant, EmptyGeneratorListRejected) {
  PlantConfig config = notional_plant();
  config.generators.clear();
  EXPECT_THROW(Plant{config}, PlantError);
}

TEST(Plant, DuplicateIdRejected) {
  PlantConfig config = notional_plant();
  config.loads[1].id = config.loads[0].id;
  EXPECT_THROW(Plant{config}, PlantError);
}

TEST(Plant, ProfileOutsideRatingRejected) {
  PlantConfig config = notional_plant();
  config.loads[0].demand = PiecewiseLinear({{0.0, 0.1}, {10.0, 2.0}});
  EXPECT_THROW(Plant{config}, PlantError);
}

TEST(Plant, TripReducesCapacityTo44) {
  PlantConfig config = flat_fleet();
  config.generators[0].trip_events = {{200.0, false}};
  Plant plant(config);
  for (int i = 0; i < 19999; ++i) plant.step();
  EXPECT_DOUBLE_EQ(plant.capacity_mw(), 79.0);
  EXPECT_FALSE(plant.read_measurements().violation);
  plant.step();
  EXPECT_NEAR(plant.read_measurements().t, 200.0, 1e-9);
  EXPECT_DOUBLE_EQ(plant.capacity_mw(), 44.0);
  EXPECT_DOUBLE_EQ(plant.read_measurements().gen_available[0], 0.0);
  EXPECT_TRUE(plant.read_measurements().violation);  // 68 > 44
}

TEST(Plant, FlatProfilesKeepServedConstant) {
  Plant plant(flat_fleet());
  const double first = plant.step().served_mw;
  for (int i = 0; i < 100; ++i) EXPECT_DOUBLE_EQ(plant.step().served_mw, first);
}

TEST(Plant, ZeroDtRejected) {
  Plant plant(notional_plant());
  EXPECT_THROW(plant.step(0.0), PlantError);
}

TEST(Plant, SnapToGrid) {
  EXPECT_DOUBLE_EQ(snap_to_grid(0.57, 4), 0.5);
  EXPECT_DOUBLE_EQ(snap_to_grid(0.625, 4), 0.5);  // tie goes lower
  EXPECT_DOUBLE_EQ(snap_to_grid(0.63, 4), 0.75);
  EXPECT_DOUBLE_EQ(snap_to_grid(0.5, 0), 0.5);
}

TEST(Plant, CommandAppliesAtNextStep) {
  PlantConfig config = notional_plant();
  config.loads[0].steps = 0;
  Plant plant(config);
  EXPECT_DOUBLE_EQ(plant.apply_command(std::size_t{0}, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(plant.read_measurements().load_status[0], 1.0);
  plant.step();
  EXPECT_DOUBLE_EQ(plant.read_measurements().load_status[0], 0.5);
}

TEST(Plant, CommandOutOfRangeRejected) {
  Plant plant(notional_plant());
  EXPECT_THROW(plant.apply_command("PMM1", 1.2), PlantError);
  EXPECT_THROW(plant.apply_command("nope", 0.5), PlantError);
}

TEST(Plant, FreshReadIsAllOnesAndPure) {
  Plant plant(notional_plant());
  const PlantState a = plant.read_measurements();
  const PlantState b = plant.read_measurements();
  for (double o : a.load_status) EXPECT_DOUBLE_EQ(o, 1.0);
  EXPECT_EQ(a.load_status, b.load_status);
  EXPECT_EQ(a.load_ref, b.load_ref);
  EXPECT_EQ(a.served_mw, b.served_mw);
}

TEST(Plant, StepGridClosureAndAccounting) {
  PlantConfig config = notional_plant();
  config.loads[0].steps = 0;
  Plant plant(config);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const std::size_t k = rng() % config.loads.size();
    plant.apply_command(k, u(rng));
    const auto& s = plant.step();
    double sum = 0.0;
    for (std::size_t j = 0; j < s.load_ref.size(); ++j) {
      sum += s.load_ref[j] * s.load_status[j];
      const int n = config.loads[j].steps;
      if (n > 0) {
        const double scaled = s.load_status[j] * n;
        EXPECT_NEAR(scaled, std::round(scaled), 1e-12);
      }
    }
    EXPECT_NEAR(s.served_mw, sum, 1e-12 * std::max(1.0, sum));
  }
}

TEST(Plant, RemovingGeneratorNeverClearsViolation) {
  PlantConfig with = notional_plant();
  PlantConfig without = with;
  without.generators[0].trip_events = {{50.0, false}};
  Plant a(with);
  Plant b(without);
  for (int i = 0; i < 50000; ++i) {
    const bool va = a.step().violation;
    const bool vb = b.step().violation;
    if (va) {
      EXPECT_TRUE(vb);
    }
  }
}
