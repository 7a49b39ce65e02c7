#include "shipcps/scenario/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

namespace shipcps::scenario {

std::string Diagnostic::str() const {
  std::ostringstream out;
  out << file;
  if (where.line > 0) out << ':' << where.line << ':' << where.column;
  out << ": " << message;
  return out.str();
}

namespace {

std::string join(const std::vector<Diagnostic>& diagnostics) {
  std::string out;
  for (const auto& d : diagnostics) {
    if (!out.empty()) out += '\n';
    out += d.str();
  }
  return out.empty() ? "invalid scenario" : out;
}

}  // namespace

ValidationError::ValidationError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

namespace {

Location location_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  if (mark.line < 0) return {};
  return {mark.line + 1, mark.column + 1};
}

// Collects diagnostics while walking the document; a bad field is reported
// and left at its default so that later checks still run.
class Reader {
 public:
  explicit Reader(std::string file) : file_(std::move(file)) {}

  void error(Location where, std::string message) {
    diagnostics_.push_back({file_, where, std::move(message)});
  }
  void error(const YAML::Node& node, std::string message) { error(location_of(node), std::move(message)); }

  std::vector<Diagnostic>& diagnostics() { return diagnostics_; }

  // Rejects non-maps and keys outside `allowed`.
  bool map(const YAML::Node& node, const std::string& what, std::initializer_list<const char*> allowed) {
    if (!node.IsMap()) {
      error(node, what + " must be a mapping");
      return false;
    }
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (keys.count(key) == 0) error(kv.first, "unknown key '" + key + "' in " + what);
    }
    return true;
  }

  template <typename T>
  bool get(const YAML::Node& parent, const char* key, T& out) {
    const YAML::Node node = parent[key];
    if (!node) return false;
    try {
      out = node.as<T>();
      return true;
    } catch (const YAML::Exception&) {
      error(node, std::string("bad value for '") + key + "'");
      return false;
    }
  }

  void number(const YAML::Node& parent, const char* key, double& out, double lo, double hi,
              bool lo_open = false) {
    double v = out;
    if (!get(parent, key, v)) return;
    const bool ok = std::isfinite(v) && (lo_open ? v > lo : v >= lo) && v <= hi;
    if (!ok) {
      std::ostringstream msg;
      msg << "'" << key << "' must be " << (lo_open ? "> " : ">= ") << lo;
      if (hi < std::numeric_limits<double>::max()) msg << " and <= " << hi;
      error(parent[key], msg.str());
      return;
    }
    out = v;
  }

  void positive(const YAML::Node& parent, const char* key, double& out) {
    number(parent, key, out, 0.0, std::numeric_limits<double>::max(), true);
  }
  void non_negative(const YAML::Node& parent, const char* key, double& out) {
    number(parent, key, out, 0.0, std::numeric_limits<double>::max());
  }

  void seconds(const YAML::Node& parent, const char* key, SimTime& out, bool allow_zero = false) {
    double v = to_seconds(out);
    number(parent, key, v, 0.0, std::numeric_limits<double>::max(), !allow_zero);
    out = from_seconds(v);
  }

  template <typename Int>
  void integer(const YAML::Node& parent, const char* key, Int& out, long long lo, long long hi) {
    long long v = static_cast<long long>(out);
    if (!get(parent, key, v)) return;
    if (v < lo || v > hi) {
      error(parent[key], std::string("'") + key + "' must be in [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "]");
      return;
    }
    out = static_cast<Int>(v);
  }

  // [start, end] pair.
  bool window(const YAML::Node& parent, double& start, double& end) {
    const YAML::Node node = parent["window"];
    if (!node) {
      error(parent, "missing 'window'");
      return false;
    }
    if (!node.IsSequence() || node.size() != 2) {
      error(node, "window must be [start, end]");
      return false;
    }
    double a = 0.0;
    double b = 0.0;
    try {
      a = node[0].as<double>();
      b = node[1].as<double>();
    } catch (const YAML::Exception&) {
      error(node, "window bounds must be numbers");
      return false;
    }
    if (!(a >= 0.0) || !std::isfinite(b)) {
      error(node, "window start must be >= 0");
      return false;
    }
    if (b < a) {
      error(node, "window end before start");
      return false;
    }
    if (b == a) {
      error(node, "window is empty");
      return false;
    }
    start = a;
    end = b;
    return true;
  }

  std::vector<std::string> strings(const YAML::Node& parent, const char* key) {
    std::vector<std::string> out;
    const YAML::Node node = parent[key];
    if (!node) return out;
    if (node.IsScalar()) {
      out.push_back(node.as<std::string>());
      return out;
    }
    if (!node.IsSequence()) {
      error(node, std::string("'") + key + "' must be a list of names");
      return out;
    }
    for (const auto& item : node) {
      if (!item.IsScalar()) {
        error(item, std::string("'") + key + "' entries must be names");
        continue;
      }
      out.push_back(item.as<std::string>());
    }
    return out;
  }

 private:
  std::string file_;
  std::vector<Diagnostic> diagnostics_;
};

void read_plant(Reader& r, const YAML::Node& node, PlantSection& out) {
  if (!r.map(node, "plant", {"dt", "propulsion_steps", "mission_loads", "propulsion_profile", "trips"})) return;
  r.number(node, "dt", out.dt, 0.0, 1.0, true);
  r.integer(node, "propulsion_steps", out.propulsion_steps, 0, 100);
  r.get(node, "mission_loads", out.mission_loads);
  if (const auto profile = node["propulsion_profile"]) {
    if (!profile.IsSequence() || profile.size() == 0) {
      r.error(profile, "propulsion_profile must be a list of [time, fraction]");
    } else {
      double last = -1.0;
      for (const auto& point : profile) {
        if (!point.IsSequence() || point.size() != 2) {
          r.error(point, "profile points are [time, fraction]");
          continue;
        }
        try {
          const double t = point[0].as<double>();
          const double f = point[1].as<double>();
          if (!(t > last)) r.error(point, "profile times must increase");
          if (!(f >= 0.0 && f <= 1.0)) r.error(point, "profile fraction outside [0, 1]");
          last = t;
          out.propulsion_profile.emplace_back(t, f);
        } catch (const YAML::Exception&) {
          r.error(point, "profile points must be numbers");
        }
      }
    }
  }
  if (const auto trips = node["trips"]) {
    if (!trips.IsSequence()) {
      r.error(trips, "trips must be a list");
      return;
    }
    for (const auto& t : trips) {
      if (!r.map(t, "trip", {"generator", "time_s", "available"})) continue;
      TripSpec trip;
      trip.where = location_of(t);
      if (!r.get(t, "generator", trip.generator)) r.error(t, "trip needs 'generator'");
      if (!t["time_s"]) r.error(t, "trip needs 'time_s'");
      r.non_negative(t, "time_s", trip.time_s);
      r.get(t, "available", trip.available);
      out.trips.push_back(std::move(trip));
    }
  }
}

void read_topology(Reader& r, const YAML::Node& node, netsim::ShipTopologyParams& out) {
  if (!r.map(node, "topology", {"access_bandwidth_bps", "backbone_bandwidth_bps", "queue_capacity", "zone_delays_s",
                                "controller_delay_s", "attacker_bandwidth_bps"})) {
    return;
  }
  r.positive(node, "access_bandwidth_bps", out.access_bandwidth_bps);
  r.positive(node, "backbone_bandwidth_bps", out.backbone_bandwidth_bps);
  r.positive(node, "attacker_bandwidth_bps", out.attacker_bandwidth_bps);
  r.integer(node, "queue_capacity", out.queue_capacity, 1, 1'000'000);
  r.non_negative(node, "controller_delay_s", out.controller_delay_s);
  if (const auto delays = node["zone_delays_s"]) {
    std::vector<double> v;
    if (r.get(node, "zone_delays_s", v)) {
      bool ok = v.size() == 4;
      for (double d : v) ok = ok && d >= 0.0 && std::isfinite(d);
      if (ok) {
        out.zone_delays_s = v;
      } else {
        r.error(delays, "zone_delays_s needs four non-negative delays");
      }
    }
  }
}

void read_transport(Reader& r, const YAML::Node& node, netsim::TransportConfig& out) {
  if (!r.map(node, "transport", {"window", "min_rto_s", "max_rto_s", "max_retries"})) return;
  r.integer(node, "window", out.window, 1, 1024);
  r.seconds(node, "min_rto_s", out.min_rto);
  r.seconds(node, "max_rto_s", out.max_rto);
  r.integer(node, "max_retries", out.max_retries, 1, 1000);
  if (out.max_rto < out.min_rto) r.error(node, "max_rto_s below min_rto_s");
}

void read_gateways(Reader& r, const YAML::Node& node, GatewaySection& out) {
  if (!r.map(node, "gateways", {"period_s", "phase_s", "publish"})) return;
  r.positive(node, "period_s", out.period_s);
  r.non_negative(node, "phase_s", out.phase_s);
  r.get(node, "publish", out.publish);
}

void read_controller(Reader& r, const YAML::Node& node, controller::ControllerConfig& out) {
  if (!r.map(node, "controller", {"period_s", "alpha", "beta", "ramp_min_mw", "ramp_max_mw", "poll_timeout_s",
                                  "poll_wait_s", "first_cycle_s"})) {
    return;
  }
  r.seconds(node, "period_s", out.period);
  r.number(node, "alpha", out.alpha, 0.0, 1e6);
  r.number(node, "beta", out.beta, 0.0, 1.0);
  r.get(node, "ramp_min_mw", out.ramp_min);
  r.get(node, "ramp_max_mw", out.ramp_max);
  r.seconds(node, "poll_timeout_s", out.poll_timeout);
  r.seconds(node, "poll_wait_s", out.poll_wait);
  r.seconds(node, "first_cycle_s", out.first_cycle, true);
  try {
    out.validate();
  } catch (const controller::ConfigError& e) {
    r.error(node, std::string("controller: ") + e.what());
  }
}

void read_missions(Reader& r, const YAML::Node& node, MissionSection& out) {
  out.where = location_of(node);
  if (!r.map(node, "missiondb", {"active", "missions"})) return;
  r.get(node, "active", out.active);
  const auto missions = node["missions"];
  if (!missions) return;
  if (!missions.IsSequence()) {
    r.error(missions, "missions must be a list");
    return;
  }
  for (const auto& m : missions) {
    if (!r.map(m, "mission", {"id", "loads"})) continue;
    controller::Mission mission;
    if (!r.get(m, "id", mission.id)) r.error(m, "mission needs 'id'");
    const auto loads = m["loads"];
    if (!loads || !loads.IsMap()) {
      r.error(m, "mission needs a 'loads' mapping");
      continue;
    }
    for (const auto& kv : loads) {
      const auto id = kv.first.as<std::string>();
      controller::LoadMission lm;
      if (r.map(kv.second, "mission load " + id, {"weight", "required"})) {
        r.positive(kv.second, "weight", lm.weight);
        r.number(kv.second, "required", lm.required, 0.0, 1.0);
      }
      mission.loads[id] = lm;
    }
    out.missions.push_back(std::move(mission));
  }
}

void read_faults(Reader& r, const YAML::Node& node, std::vector<FaultEntry>& out) {
  if (!node.IsSequence()) {
    r.error(node, "faults must be a list");
    return;
  }
  for (const auto& f : node) {
    if (!r.map(f, "fault", {"kind", "links", "devices", "delta_s", "probability", "period_s", "window"})) continue;
    FaultEntry entry;
    entry.where = location_of(f);
    std::string kind;
    if (!r.get(f, "kind", kind)) {
      r.error(f, "fault needs 'kind'");
    } else if (auto k = faultgen::parse_fault_kind(kind)) {
      entry.spec.kind = *k;
    } else {
      r.error(f["kind"], "unknown fault kind '" + kind + "'");
    }
    entry.spec.links = r.strings(f, "links");
    entry.spec.devices = r.strings(f, "devices");
    r.non_negative(f, "delta_s", entry.spec.delta_s);
    r.number(f, "probability", entry.spec.probability, 0.0, 1.0);
    r.positive(f, "period_s", entry.spec.period_s);
    r.window(f, entry.spec.start_s, entry.spec.end_s);
    out.push_back(std::move(entry));
  }
}

void read_attacks(Reader& r, const YAML::Node& node, std::vector<AttackEntry>& out) {
  if (!node.IsSequence()) {
    r.error(node, "attacks must be a list");
    return;
  }
  for (const auto& a : node) {
    AttackEntry entry;
    entry.where = location_of(a);
    if (!a.IsMap()) {
      r.error(a, "attack must be a mapping");
      continue;
    }
    std::string kind;
    r.get(a, "kind", kind);
    if (kind == "dos") {
      entry.kind = AttackKind::kDos;
      r.map(a, "dos attack", {"kind", "window", "target", "port", "rate_pps", "payload_bytes", "hard_crash"});
      r.get(a, "target", entry.target);
      r.integer(a, "port", entry.port, 1, 65535);
      r.positive(a, "rate_pps", entry.rate_pps);
      r.integer(a, "payload_bytes", entry.payload_bytes, 0, 1400);
      r.get(a, "hard_crash", entry.hard_crash);
    } else if (kind == "mitm") {
      entry.kind = AttackKind::kMitm;
      r.map(a, "mitm attack", {"kind", "window", "victim", "registers", "value", "poison_period_s"});
      if (!r.get(a, "victim", entry.victim)) r.error(a, "mitm needs 'victim'");
      if (const auto regs = a["registers"]) {
        std::vector<int> v;
        if (r.get(a, "registers", v)) {
          if (v.size() == 2 && v[0] >= 0 && v[0] <= v[1] && v[1] < 65536) {
            entry.first_register = static_cast<std::uint16_t>(v[0]);
            entry.last_register = static_cast<std::uint16_t>(v[1]);
          } else {
            r.error(regs, "registers must be [first, last] with first <= last");
          }
        }
      }
      r.integer(a, "value", entry.value, 0, 65535);
      r.positive(a, "poison_period_s", entry.poison_period_s);
    } else {
      r.error(a["kind"] ? a["kind"] : a, kind.empty() ? "attack needs 'kind'" : "unknown attack kind '" + kind + "'");
      continue;
    }
    r.window(a, entry.start_s, entry.end_s);
    out.push_back(std::move(entry));
  }
}

void read_phases(Reader& r, const YAML::Node& node, std::vector<PhaseSpec>& out) {
  if (!node.IsSequence()) {
    r.error(node, "phases must be a list");
    return;
  }
  std::set<std::string> names;
  for (const auto& p : node) {
    if (!r.map(p, "phase", {"name", "window"})) continue;
    PhaseSpec phase;
    phase.where = location_of(p);
    if (!r.get(p, "name", phase.name)) r.error(p, "phase needs 'name'");
    if (!names.insert(phase.name).second) r.error(p, "duplicate phase '" + phase.name + "'");
    r.window(p, phase.start_s, phase.end_s);
    out.push_back(std::move(phase));
  }
}

void read_outputs(Reader& r, const YAML::Node& node, OutputSection& out) {
  if (!r.map(node, "outputs", {"directory", "trace", "timeseries", "decisions", "timeseries_stride"})) return;
  r.get(node, "directory", out.directory);
  r.get(node, "trace", out.trace);
  r.get(node, "timeseries", out.timeseries);
  r.get(node, "decisions", out.decisions);
  r.integer(node, "timeseries_stride", out.timeseries_stride, 1, 1'000'000);
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& file) {
  Reader r(file);
  ScenarioConfig config;
  config.source = file;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    r.error(Location{e.mark.line + 1, e.mark.column + 1}, e.msg);
    throw ValidationError(r.diagnostics());
  }
  if (!r.map(root, "scenario", {"schema_version", "name", "description", "seed", "duration_s", "mode", "plant",
                                "topology", "transport", "gateways", "controller", "missiondb", "faults", "attacks",
                                "phases", "analysis", "outputs"})) {
    throw ValidationError(r.diagnostics());
  }

  if (!root["schema_version"]) {
    r.error(root, "missing 'schema_version'");
  } else if (r.get(root, "schema_version", config.schema_version) && config.schema_version != kSchemaVersion) {
    r.error(root["schema_version"], "unsupported schema_version " + std::to_string(config.schema_version) +
                                        " (expected " + std::to_string(kSchemaVersion) + ")");
  }
  if (!r.get(root, "name", config.name) || config.name.empty()) r.error(root, "missing 'name'");
  r.get(root, "description", config.description);
  r.get(root, "seed", config.seed);
  r.number(root, "duration_s", config.duration_s, 0.0, 1e6, true);
  std::string mode;
  if (r.get(root, "mode", mode)) {
    if (auto m = controller::parse_mode(mode)) {
      config.mode = *m;
    } else {
      r.error(root["mode"], "mode must be synchronous or asynchronous");
    }
  }

  if (root["plant"]) read_plant(r, root["plant"], config.plant);
  if (root["topology"]) read_topology(r, root["topology"], config.topology);
  if (root["transport"]) read_transport(r, root["transport"], config.transport);
  if (root["gateways"]) read_gateways(r, root["gateways"], config.gateways);
  if (root["controller"]) read_controller(r, root["controller"], config.controller);
  config.controller.mode = config.mode;
  if (root["missiondb"]) read_missions(r, root["missiondb"], config.missiondb);
  if (root["faults"]) read_faults(r, root["faults"], config.faults);
  if (root["attacks"]) read_attacks(r, root["attacks"], config.attacks);
  if (root["phases"]) read_phases(r, root["phases"], config.phases);
  if (const auto analysis = root["analysis"]) {
    if (r.map(analysis, "analysis", {"over_shed_tolerance_mw"})) {
      r.positive(analysis, "over_shed_tolerance_mw", config.over_shed_tolerance_mw);
    }
  }
  if (root["outputs"]) read_outputs(r, root["outputs"], config.outputs);

  if (!r.diagnostics().empty()) throw ValidationError(r.diagnostics());
  return config;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError({{path, {}, "cannot read file"}});
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), path);
}

plant::PlantConfig build_plant_config(const ScenarioConfig& config) {
  plant::NotionalOptions options;
  options.propulsion_steps = config.plant.propulsion_steps;
  options.include_mission_loads = config.plant.mission_loads;
  auto plant = plant::notional_plant(options);
  plant.dt = config.plant.dt;
  if (!config.plant.propulsion_profile.empty()) {
    for (auto& load : plant.loads) {
      if (load.category != plant::LoadCategory::kPropulsion) continue;
      std::vector<std::pair<double, double>> points;
      for (const auto& [t, f] : config.plant.propulsion_profile) points.emplace_back(t, f * load.rated_mw);
      load.demand = plant::PiecewiseLinear(points);
    }
  }
  for (const auto& trip : config.plant.trips) {
    auto& gens = plant.generators;
    for (auto& g : gens) {
      if (g.id == trip.generator) g.trip_events.push_back({trip.time_s, trip.available});
    }
  }
  for (auto& g : plant.generators) {
    std::stable_sort(g.trip_events.begin(), g.trip_events.end(),
                     [](const auto& a, const auto& b) { return a.time < b.time; });
  }
  return plant;
}

}  // namespace shipcps::scenario
