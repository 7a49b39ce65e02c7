#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "shipcps/sim_time.hpp"

namespace shipcps::plant {

class PlantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GeneratorKind { kMtg, kAtg };

enum class LoadCategory { kVital, kSemiVital, kNonVital, kPropulsion, kMission };

std::string_view to_string(GeneratorKind kind);
std::string_view to_string(LoadCategory category);
std::optional<LoadCategory> parse_load_category(std::string_view text);
std::optional<GeneratorKind> parse_generator_kind(std::string_view text);

inline constexpr double kMtgRatingMw = 35.0;
inline constexpr double kAtgRatingMw = 4.5;

struct TripEvent {
  double time = 0.0;
  bool available = false;
};

struct GeneratorSpec {
  std::string id;
  GeneratorKind kind = GeneratorKind::kMtg;
  double rating_mw = kMtgRatingMw;
  int zone = 1;
  std::vector<TripEvent> trip_events;
  // Device node that reports this generator; defaults to the generator id.
  std::string device;
};

// Piecewise-linear function of time, constant beyond its end points.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  explicit PiecewiseLinear(std::vector<std::pair<double, double>> points);

  static PiecewiseLinear constant(double value);

  double at(double t) const;
  double min_value() const;
  double max_value() const;
  const std::vector<std::pair<double, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<double, double>> points_;
};

struct LoadSpec {
  std::string id;
  int zone = 1;
  LoadCategory category = LoadCategory::kNonVital;
  double rated_mw = 1.0;
  double weight = 1.0;
  // 0 for a continuous load; n > 0 restricts the status to {0, 1/n, ..., 1}.
  int steps = 0;
  PiecewiseLinear demand;
  std::string device;
  // Plant-only loads draw power but are invisible to the controller.
  bool controllable = true;

  bool is_step() const { return steps > 0; }
};

struct PlantConfig {
  std::vector<GeneratorSpec> generators;
  std::vector<LoadSpec> loads;
  double dt = 0.01;
};

struct NotionalOptions {
  bool include_mission_loads = false;
  // Step count of the propulsion modules.
  int propulsion_steps = 2;
  // Step count of the load-center feeders (vital, semi-vital, non-vital).
  int load_center_steps = 1;
};

// Four-zone MVAC fleet: 2 MTG, 2 ATG, 8 load-center groups split into
// vital/semi-vital/non-vital feeders and 4 propulsion modules.
PlantConfig notional_plant(const NotionalOptions& options = {});

// Default propulsion demand as a fraction of rating: 40% until 300 s, ramps to
// 100% at 400 s and returns to 40% by 410 s.
PiecewiseLinear default_propulsion_profile(double rated_mw);

double snap_to_grid(double status, int steps);

struct PlantState {
  double t = 0.0;
  std::vector<double> gen_available;  // MW, indexed like PlantConfig::generators
  std::vector<double> load_ref;       // MW, indexed like PlantConfig::loads
  std::vector<double> load_status;
  double served_mw = 0.0;
  double available_mw = 0.0;
  bool violation = false;
};

class Plant {
 public:
  explicit Plant(PlantConfig config);

  // Advances virtual time by dt seconds and returns the new state.
  const PlantState& step(double dt);
  const PlantState& step() { return step(config_.dt); }

  // Queues a status command; takes effect on the next step. Returns the
  // accepted (grid-snapped) status.
  double apply_command(std::string_view load_id, double status);
  double apply_command(std::size_t load_index, double status);

  const PlantState& read_measurements() const { return state_; }

  const PlantConfig& config() const { return config_; }
  std::size_t load_index(std::string_view id) const;
  std::size_t generator_index(std::string_view id) const;
  double capacity_mw() const { return state_.available_mw; }

 private:
  void sample(double t);

  PlantConfig config_;
  PlantState state_;
  SimTime now_ = 0;
  std::vector<std::size_t> next_trip_;
  std::vector<std::optional<double>> pending_status_;
  std::unordered_map<std::string, std::size_t> load_lookup_;
  std::unordered_map<std::string, std::size_t> generator_lookup_;
};

}  // namespace shipcps::plant
