#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shipcps/adversary/adversary.hpp"
#include "shipcps/controller/controller.hpp"
#include "shipcps/faultgen/faultgen.hpp"
#include "shipcps/modbus/endpoint.hpp"
#include "shipcps/netsim/network.hpp"
#include "shipcps/netsim/transport.hpp"
#include "shipcps/plant.hpp"

namespace shipcps::scenario {

inline constexpr int kSchemaVersion = 1;

struct Location {
  int line = 0;  // 1-based; 0 when unknown
  int column = 0;
};

struct Diagnostic {
  std::string file;
  Location where;
  std::string message;

  // "file:line:col: message"
  std::string str() const;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

struct TripSpec {
  std::string generator;
  double time_s = 0.0;
  bool available = false;
  Location where;
};

struct PlantSection {
  double dt = 0.01;
  int propulsion_steps = 2;
  bool mission_loads = false;
  // Propulsion demand as (time, fraction of rating); empty keeps the default.
  std::vector<std::pair<double, double>> propulsion_profile;
  std::vector<TripSpec> trips;
};

struct GatewaySection {
  double period_s = 0.1;
  double phase_s = 0.0;
  bool publish = false;
};

struct MissionSection {
  std::string active = "default";
  // Empty uses the plant's own weights with full service required.
  std::vector<controller::Mission> missions;
  Location where;
};

struct FaultEntry {
  faultgen::FaultSpec spec;
  Location where;
};

enum class AttackKind { kDos, kMitm };

struct AttackEntry {
  AttackKind kind = AttackKind::kDos;
  double start_s = 0.0;
  double end_s = 0.0;
  // DoS
  std::string target = netsim::kControllerNode;
  std::uint16_t port = 502;
  double rate_pps = 10000.0;
  std::size_t payload_bytes = 500;
  bool hard_crash = false;
  // MITM
  std::string victim;
  std::uint16_t first_register = 2;
  std::uint16_t last_register = 2;
  std::uint16_t value = 0;
  double poison_period_s = 1.0;
  Location where;
};

struct PhaseSpec {
  std::string name;
  double start_s = 0.0;
  double end_s = 0.0;
  Location where;
};

struct OutputSection {
  std::string directory;
  bool trace = true;
  bool timeseries = true;
  bool decisions = true;
  int timeseries_stride = 10;  // plant steps per row
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  std::string name;
  std::string description;
  std::uint64_t seed = 1;
  double duration_s = 500.0;
  controller::Mode mode = controller::Mode::kAsynchronous;
  PlantSection plant;
  netsim::ShipTopologyParams topology;
  netsim::TransportConfig transport;
  GatewaySection gateways;
  controller::ControllerConfig controller;
  MissionSection missiondb;
  std::vector<FaultEntry> faults;
  std::vector<AttackEntry> attacks;
  std::vector<PhaseSpec> phases;
  double over_shed_tolerance_mw = 1e-3;
  OutputSection outputs;

  std::string source;  // file name used in diagnostics
};

// Parses and checks the document on its own (types, ranges, unknown keys,
// window ordering). Throws ValidationError with every problem found.
ScenarioConfig parse_scenario(const std::string& text, const std::string& file = "<scenario>");
ScenarioConfig load_scenario(const std::string& path);

plant::PlantConfig build_plant_config(const ScenarioConfig& config);

}  // namespace shipcps::scenario
