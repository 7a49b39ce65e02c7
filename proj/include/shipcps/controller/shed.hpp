#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace shipcps::controller {

class OracleTooLarge : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ShedLoad {
  double weight = 1.0;        // mission priority w
  double ref_mw = 0.0;        // reference power now
  double prev_ref_mw = 0.0;   // reference power at the previous cycle
  double prev_status = 1.0;   // status commanded at the previous cycle
  double required = 1.0;      // mission-required status
  int steps = 0;              // 0 = continuous
  std::size_t device_index = 0;

  double priority() const { return weight * ref_mw; }
  bool is_step() const { return steps > 0; }
};

struct ShedProblem {
  std::vector<ShedLoad> loads;
  std::vector<double> gen_available;  // MW
  double alpha = 0.01;
  double beta = 0.05;
  double ramp_min = -10.0;  // MW per cycle
  double ramp_max = 5.0;

  double capacity() const;
  // Sum of priority x required status; the objective's constant normalizer.
  double normalizer() const;
};

struct ShedPlan {
  std::vector<double> status;
  double objective = 1.0;
  // Even the most aggressive shedding the ramp limits allow exceeds capacity.
  bool infeasible = false;
  // Some load could not stay inside its ramp band (its reference moved too far).
  bool ramp_relaxed = false;
  std::uint64_t nodes = 0;
  double solve_seconds = 0.0;
};

struct StatusBox {
  double lo = 0.0;
  double hi = 1.0;
  bool clamped = false;
};

// Statuses reachable within the ramp limits, clamped into [0, 1].
StatusBox ramp_box(const ShedProblem& problem, std::size_t i);
// Grid points a step load may take this cycle, highest first.
std::vector<double> allowed_grid(const ShedProblem& problem, std::size_t i, bool* relaxed = nullptr);

double objective(const ShedProblem& problem, const std::vector<double>& status);

// Checks capacity, ramp and grid constraints to the given tolerance.
bool satisfies_constraints(const ShedProblem& problem, const std::vector<double>& status,
                           double tolerance = 1e-9);

// Exact optimum by branch and bound over step loads with an exact LP bound.
// Ties within 1e-9 go to the lexicographically highest status vector when
// loads are ordered by weight (high first) and device index (high first).
ShedPlan solve(const ShedProblem& problem);

// Brute force over step grids and LP vertices. Small instances only.
ShedPlan solve_oracle(const ShedProblem& problem);

}  // namespace shipcps::controller
