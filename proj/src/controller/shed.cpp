#include "shipcps/controller/shed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace shipcps::controller {

namespace {

constexpr double kTie = 1e-9;
constexpr double kGridSlack = 1e-9;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Per-MW value of raising a load's status, below and above its previous status.
double unit_value(const ShedProblem& p, std::size_t i, double normalizer) {
  return normalizer > 0.0 ? p.loads[i].priority() / normalizer : 0.0;
}

// Tie-break order: step loads first, each group by weight (high first) then
// device index (high first). Earlier positions prefer higher status.
std::vector<std::size_t> tie_order(const ShedProblem& p) {
  std::vector<std::size_t> order(p.loads.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& la = p.loads[a];
    const auto& lb = p.loads[b];
    if (la.is_step() != lb.is_step()) return la.is_step();
    if (la.weight != lb.weight) return la.weight > lb.weight;
    if (la.device_index != lb.device_index) return la.device_index > lb.device_index;
    return a > b;
  });
  return order;
}

// -1 if a sorts before b (preferred), +1 if after, 0 if equal.
int lex_compare(const std::vector<double>& a, const std::vector<double>& b,
                const std::vector<std::size_t>& order) {
  for (std::size_t i : order) {
    if (a[i] > b[i] + 1e-12) return -1;
    if (a[i] < b[i] - 1e-12) return 1;
  }
  return 0;
}

struct Box {
  double lo;
  double hi;
};

// Exact LP over loads marked free (box bounds), others fixed. Fills `out`.
// Returns -inf when the fixed part alone exceeds capacity.
double solve_lp(const ShedProblem& p, const std::vector<bool>& free, const std::vector<Box>& boxes,
                const std::vector<std::size_t>& rank, double normalizer, std::vector<double>& out) {
  const std::size_t n = p.loads.size();
  double used = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (free[i]) out[i] = boxes[i].lo;
    used += p.loads[i].ref_mw * out[i];
  }
  double budget = p.capacity() - used;
  if (budget < -kTie) return kNegInf;

  struct Piece {
    std::size_t load;
    double from;
    double to;
    double slope;  // objective per unit status
  };
  std::vector<Piece> pieces;
  for (std::size_t i = 0; i < n; ++i) {
    if (!free[i]) continue;
    const double c = unit_value(p, i, normalizer);
    const double prev = p.loads[i].prev_status;
    const double lo = boxes[i].lo;
    const double hi = boxes[i].hi;
    if (lo < prev) {
      const double to = std::min(prev, hi);
      if (to > lo && c + p.alpha > 0.0) pieces.push_back({i, lo, to, c + p.alpha});
    }
    const double from = std::max(lo, prev);
    if (hi > from && c - p.alpha > 0.0) pieces.push_back({i, from, hi, c - p.alpha});
  }
  auto density = [&](const Piece& x) {
    const double mw = p.loads[x.load].ref_mw;
    return mw > 0.0 ? x.slope / mw : std::numeric_limits<double>::infinity();
  };
  std::stable_sort(pieces.begin(), pieces.end(), [&](const Piece& a, const Piece& b) {
    const double da = density(a);
    const double db = density(b);
    if (da != db) return da > db;
    return rank[a.load] < rank[b.load];
  });
  for (const auto& piece : pieces) {
    const double mw = p.loads[piece.load].ref_mw;
    const double span = piece.to - piece.from;
    if (mw <= 0.0) {
      out[piece.load] = piece.to;
      continue;
    }
    if (budget <= 0.0) break;
    const double take = std::min(span, budget / mw);
    if (take <= 0.0) break;
    out[piece.load] = piece.from + take;
    budget -= take * mw;
    // A partially filled piece exhausts the budget; leftover rounding must not
    // let a later piece of the same load jump to its start.
    if (take < span) break;
  }
  return objective(p, out);
}

}  // namespace

double ShedProblem::capacity() const {
  double total = 0.0;
  for (double g : gen_available) total += g;
  return (1.0 - beta) * total;
}

double ShedProblem::normalizer() const {
  double n = 0.0;
  for (const auto& l : loads) n += l.priority() * l.required;
  return n;
}

StatusBox ramp_box(const ShedProblem& problem, std::size_t i) {
  const auto& l = problem.loads[i];
  StatusBox box;
  if (l.ref_mw <= 0.0) return box;
  const double base = l.prev_ref_mw * l.prev_status;
  const double lo = std::max(0.0, (base + problem.ramp_min) / l.ref_mw);
  const double hi = std::min(1.0, (base + problem.ramp_max) / l.ref_mw);
  if (lo > hi + 1e-12) {
    box.clamped = true;
    box.lo = box.hi = lo > 1.0 ? 1.0 : 0.0;
    return box;
  }
  box.lo = lo;
  box.hi = std::max(lo, hi);
  return box;
}

std::vector<double> allowed_grid(const ShedProblem& problem, std::size_t i, bool* relaxed) {
  const auto& l = problem.loads[i];
  const StatusBox box = ramp_box(problem, i);
  if (relaxed) *relaxed = box.clamped;
  std::vector<double> grid;
  const int n = l.steps;
  for (int k = n; k >= 0; --k) {
    const double v = static_cast<double>(k) / n;
    if (v >= box.lo - kGridSlack && v <= box.hi + kGridSlack) grid.push_back(v);
  }
  if (!grid.empty()) return grid;
  if (relaxed) *relaxed = true;
  const double below = std::floor(box.lo * n) / n;
  const double above = std::ceil(box.hi * n) / n;
  grid.push_back(box.lo - below <= above - box.hi ? below : above);
  return grid;
}

double objective(const ShedProblem& problem, const std::vector<double>& status) {
  const double normalizer = problem.normalizer();
  double served = 0.0;
  double switching = 0.0;
  for (std::size_t i = 0; i < problem.loads.size(); ++i) {
    served += problem.loads[i].priority() * status[i];
    switching += std::abs(status[i] - problem.loads[i].prev_status);
  }
  const double ratio = normalizer > 0.0 ? served / normalizer : 1.0;
  return ratio - problem.alpha * switching;
}

bool satisfies_constraints(const ShedProblem& problem, const std::vector<double>& status,
                           double tolerance) {
  if (status.size() != problem.loads.size()) return false;
  double load = 0.0;
  for (std::size_t i = 0; i < status.size(); ++i) {
    const auto& l = problem.loads[i];
    const double o = status[i];
    if (o < -tolerance || o > 1.0 + tolerance) return false;
    if (l.is_step()) {
      const double scaled = o * l.steps;
      if (std::abs(scaled - std::round(scaled)) > tolerance * l.steps) return false;
    }
    const double change = l.ref_mw * o - l.prev_ref_mw * l.prev_status;
    if (change < problem.ramp_min - tolerance || change > problem.ramp_max + tolerance) return false;
    load += l.ref_mw * o;
  }
  return load <= problem.capacity() + tolerance;
}

ShedPlan solve(const ShedProblem& problem) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = problem.loads.size();
  ShedPlan plan;
  const double normalizer = problem.normalizer();
  const auto order = tie_order(problem);
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

  std::vector<Box> boxes(n);
  std::vector<std::vector<double>> grids(n);
  std::vector<std::size_t> step_loads;
  for (std::size_t i : order) {
    if (problem.loads[i].is_step()) {
      bool relaxed = false;
      grids[i] = allowed_grid(problem, i, &relaxed);
      plan.ramp_relaxed |= relaxed;
      boxes[i] = {grids[i].back(), grids[i].front()};
      step_loads.push_back(i);
    } else {
      const StatusBox b = ramp_box(problem, i);
      plan.ramp_relaxed |= b.clamped;
      boxes[i] = {b.lo, b.hi};
    }
  }

  double minimum = 0.0;
  for (std::size_t i = 0; i < n; ++i) minimum += problem.loads[i].ref_mw * boxes[i].lo;
  if (minimum > problem.capacity() + kTie) {
    plan.infeasible = true;
    plan.status.resize(n);
    for (std::size_t i = 0; i < n; ++i) plan.status[i] = boxes[i].lo;
    plan.objective = objective(problem, plan.status);
    return plan;
  }

  std::vector<bool> free(n, true);
  std::vector<double> current(n, 0.0);
  std::vector<double> scratch(n, 0.0);
  double best = kNegInf;
  std::vector<double> best_status;

  // Depth-first over step loads in tie order, highest grid value first.
  auto recurse = [&](auto&& self, std::size_t depth) -> void {
    ++plan.nodes;
    scratch = current;
    const double bound = solve_lp(problem, free, boxes, rank, normalizer, scratch);
    if (bound == kNegInf) return;
    if (bound < best - kTie) return;
    if (!best_status.empty() && bound <= best + kTie) {
      // Any completion ties at best and its fixed prefix decides the order.
      for (std::size_t d = 0; d < depth; ++d) {
        const std::size_t i = step_loads[d];
        if (current[i] > best_status[i] + 1e-12) break;
        if (current[i] < best_status[i] - 1e-12) return;
      }
    }
    if (depth == step_loads.size()) {
      const double value = objective(problem, scratch);
      if (best_status.empty() || value > best + kTie ||
          (value >= best - kTie && lex_compare(scratch, best_status, order) < 0)) {
        best = value;
        best_status = scratch;
      }
      return;
    }
    const std::size_t i = step_loads[depth];
    free[i] = false;
    for (double v : grids[i]) {
      current[i] = v;
      self(self, depth + 1);
    }
    free[i] = true;
    current[i] = 0.0;
  };
  recurse(recurse, 0);

  if (best_status.empty()) {
    // Unreachable given the minimum-load check; keep a defined result.
    plan.infeasible = true;
    best_status.resize(n);
    for (std::size_t i = 0; i < n; ++i) best_status[i] = boxes[i].lo;
  }
  plan.status = std::move(best_status);
  plan.objective = objective(problem, plan.status);
  plan.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return plan;
}

ShedPlan solve_oracle(const ShedProblem& problem) {
  const std::size_t n = problem.loads.size();
  std::vector<std::size_t> steps;
  std::vector<std::size_t> continuous;
  for (std::size_t i = 0; i < n; ++i) {
    (problem.loads[i].is_step() ? steps : continuous).push_back(i);
  }
  if (steps.size() > 8 || continuous.size() > 8) throw OracleTooLarge("oracle: too many loads");
  ShedPlan plan;
  std::vector<std::vector<double>> grids(n);
  for (std::size_t i : steps) {
    if (problem.loads[i].steps + 1 > 6) throw OracleTooLarge("oracle: step grid too fine");
    bool relaxed = false;
    grids[i] = allowed_grid(problem, i, &relaxed);
    plan.ramp_relaxed |= relaxed;
  }
  // Candidate values of each continuous load at an LP vertex.
  std::vector<std::vector<double>> breakpoints(n);
  std::vector<Box> boxes(n);
  for (std::size_t i : continuous) {
    const StatusBox b = ramp_box(problem, i);
    plan.ramp_relaxed |= b.clamped;
    boxes[i] = {b.lo, b.hi};
    auto& bp = breakpoints[i];
    bp.push_back(b.lo);
    if (b.hi > b.lo) bp.push_back(b.hi);
    const double prev = problem.loads[i].prev_status;
    if (prev > b.lo && prev < b.hi) bp.push_back(prev);
  }
  const double capacity = problem.capacity();
  const auto order = tie_order(problem);

  double best = kNegInf;
  std::vector<double> best_status;
  std::vector<double> status(n, 0.0);
  auto consider = [&] {
    double load = 0.0;
    for (std::size_t i = 0; i < n; ++i) load += problem.loads[i].ref_mw * status[i];
    if (load > capacity + kTie) return;
    const double value = objective(problem, status);
    if (best_status.empty() || value > best + kTie ||
        (value >= best - kTie && lex_compare(status, best_status, order) < 0)) {
      best = value;
      best_status = status;
    }
  };

  // Continuous loads: all at breakpoints, or one of them set by a tight
  // capacity constraint.
  auto enumerate_continuous = [&](auto&& self, std::size_t k, std::size_t tight) -> void {
    if (k == continuous.size()) {
      if (tight < continuous.size()) {
        const std::size_t j = continuous[tight];
        const double mw = problem.loads[j].ref_mw;
        if (mw <= 0.0) return;
        double others = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i != j) others += problem.loads[i].ref_mw * status[i];
        }
        const double v = (capacity - others) / mw;
        if (v < boxes[j].lo - 1e-12 || v > boxes[j].hi + 1e-12) return;
        status[j] = std::clamp(v, boxes[j].lo, boxes[j].hi);
      }
      consider();
      return;
    }
    const std::size_t i = continuous[k];
    if (k == tight) {
      self(self, k + 1, tight);
      return;
    }
    for (double v : breakpoints[i]) {
      status[i] = v;
      self(self, k + 1, tight);
    }
  };
  auto enumerate_steps = [&](auto&& self, std::size_t k) -> void {
    if (k == steps.size()) {
      for (std::size_t tight = 0; tight <= continuous.size(); ++tight) {
        enumerate_continuous(enumerate_continuous, 0, tight);
      }
      return;
    }
    const std::size_t i = steps[k];
    for (double v : grids[i]) {
      status[i] = v;
      self(self, k + 1);
    }
  };
  enumerate_steps(enumerate_steps, 0);

  if (best_status.empty()) {
    plan.infeasible = true;
    best_status.resize(n);
    for (std::size_t i : steps) best_status[i] = grids[i].back();
    for (std::size_t i : continuous) best_status[i] = boxes[i].lo;
  }
  plan.status = std::move(best_status);
  plan.objective = objective(problem, plan.status);
  return plan;
}

}  // namespace shipcps::controller
