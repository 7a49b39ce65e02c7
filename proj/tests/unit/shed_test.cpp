#include <gtest/gtest.h>

#include <random>

#include "shipcps/controller/shed.hpp"

using namespace shipcps::controller;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ShedLoad load(double w, double p, int steps, std::size_t index) {
  ShedLoad l;
  l.weight = w;
  l.ref_mw = p;
  l.prev_ref_mw = p;
  l.prev_status = 1.0;
  l.steps = steps;
  l.device_index = index;
  return l;
}

ShedProblem unlimited(std::vector<ShedLoad> loads, double gen) {
  ShedProblem p;
  p.loads = std::move(loads);
  p.gen_available = {gen};
  p.ramp_min = -kInf;
  p.ramp_max = kInf;
  return p;
}

// Default fleet as the controller sees it: 24 binary feeders + 4 half-step PMMs.
ShedProblem fleet(double pmm_mw, double gen) {
  ShedProblem p;
  std::size_t device = 4;
  for (int lc = 0; lc < 8; ++lc, ++device) {
    p.loads.push_back(load(150, 0.65, 1, device));
    p.loads.push_back(load(100, 0.10, 1, device));
    p.loads.push_back(load(50, 0.25, 1, device));
  }
  for (int k = 0; k < 4; ++k) p.loads.push_back(load(1, pmm_mw, 2, device++));
  p.gen_available = {gen};
  return p;
}

ShedProblem random_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ShedProblem p;
  const int n = 1 + static_cast<int>(rng() % 6);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    ShedLoad l;
    l.weight = 0.1 + 10 * u(rng);
    l.ref_mw = rng() % 10 == 0 ? 0.0 : 0.1 + 15 * u(rng);
    l.prev_ref_mw = l.ref_mw * (0.7 + 0.6 * u(rng));
    l.steps = static_cast<int>(rng() % 5);  // grids of 2..5 points, or continuous
    l.prev_status = l.steps > 0 ? static_cast<double>(rng() % (l.steps + 1)) / l.steps : u(rng);
    l.required = rng() % 8 == 0 ? 0.5 : 1.0;
    l.device_index = static_cast<std::size_t>(i);
    total += l.ref_mw;
    p.loads.push_back(l);
  }
  p.gen_available = {total * (0.2 + 1.0 * u(rng))};
  p.alpha = rng() % 4 == 0 ? 0.0 : 0.05 * u(rng);
  p.beta = 0.1 * u(rng);
  p.ramp_min = -(1 + 10 * u(rng));
  p.ramp_max = 1 + 6 * u(rng);
  return p;
}

}  // namespace

TEST(Shed, AmpleCapacityKeepsEverything) {
  auto p = fleet(6.0, 79.0);
  const auto plan = solve(p);
  for (double o : plan.status) EXPECT_DOUBLE_EQ(o, 1.0);
  EXPECT_NEAR(plan.objective, 1.0, 1e-12);
  EXPECT_FALSE(plan.infeasible);
}

TEST(Shed, ThreeLoadWorkedExample) {
  auto p = unlimited({load(10, 0.65, 0, 0), load(2, 0.25, 0, 1), load(1, 15, 4, 2)}, 10.0);
  const auto plan = solve(p);
  EXPECT_NEAR(plan.status[0], 1.0, 1e-12);
  EXPECT_NEAR(plan.status[1], 1.0, 1e-12);
  EXPECT_NEAR(plan.status[2], 0.5, 1e-12);
  EXPECT_NEAR(solve_oracle(p).objective, plan.objective, 1e-9);
}

TEST(Shed, SingleBinaryOverCapacityIsShed) {
  auto p = unlimited({load(1, 5, 1, 0)}, 4.0);
  EXPECT_DOUBLE_EQ(solve(p).status[0], 0.0);
  EXPECT_DOUBLE_EQ(solve_oracle(p).status[0], 0.0);
}

TEST(Shed, EmptyProblemScoresOne) {
  ShedProblem p;
  p.gen_available = {10.0};
  const auto plan = solve(p);
  EXPECT_TRUE(plan.status.empty());
  EXPECT_DOUBLE_EQ(plan.objective, 1.0);
  EXPECT_DOUBLE_EQ(solve_oracle(p).objective, 1.0);
}

TEST(Shed, InfeasibleReturnsRampSaturatedPlan) {
  auto p = unlimited({load(1, 15, 4, 0), load(1, 15, 4, 1)}, 20.0);
  p.ramp_min = -3.0;
  p.ramp_max = 5.0;
  const auto plan = solve(p);
  EXPECT_TRUE(plan.infeasible);
  // 15 - 3 = 12 MW is the lowest reachable, 0.8 -> grid 0.75 is below the band, so 1.0.
  EXPECT_DOUBLE_EQ(plan.status[0], 1.0);
  EXPECT_TRUE(solve_oracle(p).infeasible);
}

TEST(Shed, TripWithPmmsAtRatingShedsEvenlyThenHolds) {
  auto p = fleet(15.0, 44.0);
  const auto first = solve(p);
  ASSERT_FALSE(first.infeasible);
  EXPECT_TRUE(satisfies_constraints(p, first.status));
  for (std::size_t i = 0; i < 24; ++i) EXPECT_DOUBLE_EQ(first.status[i], 1.0);
  for (std::size_t i = 24; i < 28; ++i) EXPECT_DOUBLE_EQ(first.status[i], 0.5);
  for (std::size_t i = 0; i < p.loads.size(); ++i) p.loads[i].prev_status = first.status[i];
  EXPECT_EQ(solve(p).status, first.status);
}

TEST(Shed, GradualRampShedsLowestIndexPmmsCompletely) {
  // Walk PMM demand up from 40% to 100% with MTG1 out, feeding plans back.
  auto p = fleet(6.0, 44.0);
  for (double mw = 6.0; mw <= 15.0 + 1e-9; mw += 0.09) {
    for (std::size_t i = 24; i < 28; ++i) {
      p.loads[i].prev_ref_mw = p.loads[i].ref_mw;
      p.loads[i].ref_mw = mw;
    }
    const auto plan = solve(p);
    ASSERT_TRUE(satisfies_constraints(p, plan.status)) << mw;
    for (std::size_t i = 0; i < p.loads.size(); ++i) p.loads[i].prev_status = plan.status[i];
  }
  for (std::size_t i = 0; i < 24; ++i) EXPECT_DOUBLE_EQ(p.loads[i].prev_status, 1.0);
  EXPECT_DOUBLE_EQ(p.loads[24].prev_status, 0.0);
  EXPECT_DOUBLE_EQ(p.loads[25].prev_status, 0.0);
  EXPECT_DOUBLE_EQ(p.loads[26].prev_status, 1.0);
  EXPECT_DOUBLE_EQ(p.loads[27].prev_status, 1.0);
}

TEST(Shed, StickinessKeepsPreviousShedSet) {
  // Two identical PMMs, room for one: whichever was shed stays shed.
  auto p = unlimited({load(1, 10, 1, 0), load(1, 10, 1, 1)}, 11.0 / 0.95);
  p.loads[0].prev_status = 1.0;
  p.loads[1].prev_status = 0.0;
  EXPECT_EQ(solve(p).status, (std::vector<double>{1.0, 0.0}));
  p.loads[0].prev_status = 0.0;
  p.loads[1].prev_status = 1.0;
  EXPECT_EQ(solve(p).status, (std::vector<double>{0.0, 1.0}));
}

TEST(Shed, WeightScalingLeavesPlanUnchanged) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 200; ++k) {
    auto p = random_instance(rng);
    auto scaled = p;
    for (auto& l : scaled.loads) l.weight *= 7.5;
    EXPECT_EQ(solve(p).status, solve(scaled).status);
  }
}

TEST(Shed, AgreesWithOracleOnRandomInstances) {
  std::mt19937_64 rng(99);
  for (int k = 0; k < 3000; ++k) {
    const auto p = random_instance(rng);
    const auto fast = solve(p);
    const auto slow = solve_oracle(p);
    ASSERT_NEAR(fast.objective, slow.objective, 1e-9) << "instance " << k;
    EXPECT_EQ(fast.infeasible, slow.infeasible);
    if (!fast.infeasible && !fast.ramp_relaxed) {
      EXPECT_TRUE(satisfies_constraints(p, fast.status)) << "instance " << k;
    }
  }
}

TEST(Shed, OracleRefusesLargeInstances) {
  auto p = fleet(15.0, 44.0);
  EXPECT_THROW(solve_oracle(p), OracleTooLarge);
  auto fine = unlimited({load(1, 1, 6, 0)}, 1.0);
  EXPECT_THROW(solve_oracle(fine), OracleTooLarge);
}
