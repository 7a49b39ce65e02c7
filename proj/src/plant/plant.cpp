#include "shipcps/plant.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace shipcps::plant {

std::string_view to_string(GeneratorKind kind) {
  return kind == GeneratorKind::kMtg ? "MTG" : "ATG";
}

std::string_view to_string(LoadCategory category) {
  switch (category) {
    case LoadCategory::kVital: return "vital";
    case LoadCategory::kSemiVital: return "semi_vital";
    case LoadCategory::kNonVital: return "non_vital";
    case LoadCategory::kPropulsion: return "propulsion";
    case LoadCategory::kMission: return "mission";
  }
  return "unknown";
}

std::optional<LoadCategory> parse_load_category(std::string_view text) {
  for (auto c : {LoadCategory::kVital, LoadCategory::kSemiVital, LoadCategory::kNonVital,
                 LoadCategory::kPropulsion, LoadCategory::kMission}) {
    if (to_string(c) == text) return c;
  }
  return std::nullopt;
}

std::optional<GeneratorKind> parse_generator_kind(std::string_view text) {
  if (text == "MTG") return GeneratorKind::kMtg;
  if (text == "ATG") return GeneratorKind::kAtg;
  return std::nullopt;
}

PiecewiseLinear::PiecewiseLinear(std::vector<std::pair<double, double>> points)
    : points_(std::move(points)) {
  if (points_.empty()) throw PlantError("demand profile needs at least one point");
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (!(points_[i].first > points_[i - 1].first)) {
      throw PlantError("demand profile times must be strictly increasing");
    }
  }
}

PiecewiseLinear PiecewiseLinear::constant(double value) {
  return PiecewiseLinear({{0.0, value}});
}

double PiecewiseLinear::at(double t) const {
  if (points_.empty()) return 0.0;
  if (t <= points_.front().first) return points_.front().second;
  if (t >= points_.back().first) return points_.back().second;
  auto upper = std::upper_bound(points_.begin(), points_.end(), t,
                                [](double x, const auto& p) { return x < p.first; });
  const auto& [t1, v1] = *upper;
  const auto& [t0, v0] = *(upper - 1);
  return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
}

double PiecewiseLinear::min_value() const {
  double m = points_.empty() ? 0.0 : points_.front().second;
  for (const auto& p : points_) m = std::min(m, p.second);
  return m;
}

double PiecewiseLinear::max_value() const {
  double m = points_.empty() ? 0.0 : points_.front().second;
  for (const auto& p : points_) m = std::max(m, p.second);
  return m;
}

PiecewiseLinear default_propulsion_profile(double rated_mw) {
  return PiecewiseLinear({{0.0, 0.4 * rated_mw},
                          {300.0, 0.4 * rated_mw},
                          {400.0, rated_mw},
                          {410.0, 0.4 * rated_mw}});
}

PlantConfig notional_plant(const NotionalOptions& options) {
  PlantConfig config;
  const std::pair<const char*, GeneratorKind> gens[] = {
      {"MTG1", GeneratorKind::kMtg}, {"ATG1", GeneratorKind::kAtg},
      {"MTG2", GeneratorKind::kMtg}, {"ATG2", GeneratorKind::kAtg}};
  int zone = 1;
  for (const auto& [id, kind] : gens) {
    GeneratorSpec g;
    g.id = id;
    g.kind = kind;
    g.rating_mw = kind == GeneratorKind::kMtg ? kMtgRatingMw : kAtgRatingMw;
    g.zone = zone++;
    g.device = id;
    config.generators.push_back(std::move(g));
  }

  struct Feeder {
    const char* suffix;
    LoadCategory category;
    double rated;
    double weight;
  };
  // Every feeder's w * P (52, 7.6, 7.75) outweighs a propulsion half step at
  // full rating (7.5), so propulsion is shed first. A cruising propulsion
  // module still holds more than 1% of the total weight, enough to beat the
  // default switching penalty and be restored.
  const Feeder feeders[] = {{"vital", LoadCategory::kVital, 0.65, 80.0},
                            {"semi_vital", LoadCategory::kSemiVital, 0.10, 76.0},
                            {"non_vital", LoadCategory::kNonVital, 0.25, 31.0}};
  for (int z = 1; z <= 4; ++z) {
    for (int k = 1; k <= 2; ++k) {
      const std::string device = "LC" + std::to_string(z) + std::to_string(k);
      for (const auto& f : feeders) {
        LoadSpec load;
        load.id = device + "." + f.suffix;
        load.zone = z;
        load.category = f.category;
        load.rated_mw = f.rated;
        load.weight = f.weight;
        load.steps = options.load_center_steps;
        load.demand = PiecewiseLinear::constant(f.rated);
        load.device = device;
        config.loads.push_back(std::move(load));
      }
    }
  }
  for (int z = 1; z <= 4; ++z) {
    LoadSpec pmm;
    pmm.id = "PMM" + std::to_string(z);
    pmm.zone = z;
    pmm.category = LoadCategory::kPropulsion;
    pmm.rated_mw = 15.0;
    pmm.weight = 1.0;
    pmm.steps = options.propulsion_steps;
    pmm.demand = default_propulsion_profile(pmm.rated_mw);
    pmm.device = pmm.id;
    config.loads.push_back(std::move(pmm));
  }
  if (options.include_mission_loads) {
    for (int z = 1; z <= 4; ++z) {
      LoadSpec ml;
      ml.id = "ML" + std::to_string(z);
      ml.zone = z;
      ml.category = LoadCategory::kMission;
      ml.rated_mw = 1.0;
      ml.weight = 1.0;
      ml.demand = PiecewiseLinear::constant(1.0);
      ml.device = ml.id;
      ml.controllable = false;
      config.loads.push_back(std::move(ml));
    }
  }
  return config;
}

double snap_to_grid(double status, int steps) {
  if (steps <= 0) return status;
  const double scaled = status * steps;
  // Nearest grid point; exact ties resolve toward the lower point.
  double k = std::ceil(scaled - 0.5 - 1e-12);
  k = std::clamp(k, 0.0, static_cast<double>(steps));
  return k / steps + 0.0;  // no negative zero
}

namespace {

void validate(const PlantConfig& config) {
  if (config.generators.empty()) throw PlantError("plant needs at least one generator");
  if (config.loads.empty()) throw PlantError("plant needs at least one load");
  if (!(config.dt > 0.0)) throw PlantError("plant dt must be positive");
  std::unordered_set<std::string> ids;
  for (const auto& g : config.generators) {
    if (!ids.insert(g.id).second) throw PlantError("duplicate id: " + g.id);
    if (!(g.rating_mw > 0.0)) throw PlantError("generator rating must be positive: " + g.id);
    for (std::size_t i = 1; i < g.trip_events.size(); ++i) {
      if (!(g.trip_events[i].time > g.trip_events[i - 1].time)) {
        throw PlantError("trip event times must be strictly increasing: " + g.id);
      }
    }
  }
  for (const auto& l : config.loads) {
    if (!ids.insert(l.id).second) throw PlantError("duplicate id: " + l.id);
    if (!(l.rated_mw > 0.0)) throw PlantError("load rating must be positive: " + l.id);
    if (!(l.weight > 0.0)) throw PlantError("load weight must be positive: " + l.id);
    if (l.steps < 0) throw PlantError("load step count must be non-negative: " + l.id);
    if (l.zone < 1 || l.zone > 4) throw PlantError("load zone must be 1..4: " + l.id);
    if (l.demand.points().empty()) throw PlantError("load has no demand profile: " + l.id);
    if (l.demand.min_value() < -1e-9 || l.demand.max_value() > l.rated_mw + 1e-9) {
      throw PlantError("demand profile leaves [0, rated_power]: " + l.id);
    }
  }
}

}  // namespace

Plant::Plant(PlantConfig config) : config_(std::move(config)) {
  validate(config_);
  for (std::size_t i = 0; i < config_.loads.size(); ++i) load_lookup_[config_.loads[i].id] = i;
  for (std::size_t i = 0; i < config_.generators.size(); ++i) {
    generator_lookup_[config_.generators[i].id] = i;
  }
  state_.gen_available.resize(config_.generators.size());
  for (std::size_t g = 0; g < config_.generators.size(); ++g) {
    state_.gen_available[g] = config_.generators[g].rating_mw;
  }
  state_.load_ref.assign(config_.loads.size(), 0.0);
  state_.load_status.assign(config_.loads.size(), 1.0);
  next_trip_.assign(config_.generators.size(), 0);
  pending_status_.assign(config_.loads.size(), std::nullopt);
  sample(0.0);
}

void Plant::sample(double t) {
  state_.t = t;
  for (std::size_t g = 0; g < config_.generators.size(); ++g) {
    const auto& events = config_.generators[g].trip_events;
    auto& next = next_trip_[g];
    while (next < events.size() && events[next].time <= t + 1e-12) {
      state_.gen_available[g] = events[next].available ? config_.generators[g].rating_mw : 0.0;
      ++next;
    }
  }
  double served = 0.0;
  for (std::size_t i = 0; i < config_.loads.size(); ++i) {
    if (pending_status_[i]) {
      state_.load_status[i] = *pending_status_[i];
      pending_status_[i].reset();
    }
    state_.load_ref[i] = config_.loads[i].demand.at(t);
    served += state_.load_ref[i] * state_.load_status[i];
  }
  double available = 0.0;
  for (double p : state_.gen_available) available += p;
  state_.served_mw = served;
  state_.available_mw = available;
  state_.violation = served > available + 1e-9;
}

const PlantState& Plant::step(double dt) {
  if (!(dt > 0.0)) throw PlantError("step dt must be positive");
  now_ += from_seconds(dt);
  sample(to_seconds(now_));
  return state_;
}

double Plant::apply_command(std::string_view load_id, double status) {
  return apply_command(load_index(load_id), status);
}

double Plant::apply_command(std::size_t index, double status) {
  if (index >= config_.loads.size()) throw PlantError("unknown load index");
  if (!(status >= 0.0 && status <= 1.0)) {
    throw PlantError("status command outside [0, 1] for " + config_.loads[index].id);
  }
  const double accepted = snap_to_grid(status, config_.loads[index].steps);
  pending_status_[index] = accepted;
  return accepted;
}

std::size_t Plant::load_index(std::string_view id) const {
  auto it = load_lookup_.find(std::string(id));
  if (it == load_lookup_.end()) throw PlantError("unknown load id: " + std::string(id));
  return it->second;
}

std::size_t Plant::generator_index(std::string_view id) const {
  auto it = generator_lookup_.find(std::string(id));
  if (it == generator_lookup_.end()) throw PlantError("unknown generator id: " + std::string(id));
  return it->second;
}

}  // namespace shipcps::plant
