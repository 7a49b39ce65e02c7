#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shipcps/controller/shed.hpp"
#include "shipcps/modbus/endpoint.hpp"
#include "shipcps/modbus/registers.hpp"
#include "shipcps/netsim/event_queue.hpp"
#include "shipcps/plant.hpp"

namespace shipcps::controller {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { kSynchronous, kAsynchronous };

std::string_view to_string(Mode mode);
std::optional<Mode> parse_mode(std::string_view text);

struct ControllerConfig {
  SimTime period = kNanosPerSecond;
  double alpha = 0.01;
  double beta = 0.05;
  double ramp_min = -10.0;  // MW per cycle
  double ramp_max = 5.0;
  // Master-side timeout of each poll and write.
  SimTime poll_timeout = millis(250);
  // How long a cycle waits for this cycle's replies before deciding. Replies
  // arriving later still refresh the cache.
  SimTime poll_wait = millis(250);
  Mode mode = Mode::kAsynchronous;
  SimTime first_cycle = 0;

  void validate() const;
};

struct LoadMission {
  double weight = 1.0;
  double required = 1.0;
};

struct Mission {
  std::string id;
  std::map<std::string, LoadMission> loads;  // by plant load id
};

class MissionDb {
 public:
  void add(Mission mission);
  bool contains(const std::string& id) const { return missions_.count(id) > 0; }
  const Mission& at(const std::string& id) const;
  const std::map<std::string, Mission>& missions() const { return missions_; }

  // Throws ConfigError when a controllable load is missing from any mission
  // or a mission names an unknown load.
  void validate_against(const plant::PlantConfig& plant) const;

  // One mission ("default") using the plant's own weights and full service.
  static MissionDb from_plant(const plant::PlantConfig& plant);

 private:
  std::map<std::string, Mission> missions_;
};

struct PollRecord {
  SimTime at = 0;
  modbus::Outcome::Kind kind = modbus::Outcome::Kind::kTimeout;
  SimTime age = 0;
};

struct CacheEntry {
  std::optional<modbus::DecodedMeasurement> values;
  SimTime received_at = -1;
  std::uint64_t accepted = 0;
  std::uint64_t rejected_stale = 0;
  std::vector<PollRecord> history;
};

// Last known values per device. Values are only replaced by measurements with
// a newer timestamp.
class MeasurementCache {
 public:
  explicit MeasurementCache(std::size_t devices = 0) : entries_(devices) {}

  bool offer(std::size_t device, modbus::DecodedMeasurement values, SimTime received_at);
  void record(std::size_t device, PollRecord record);

  std::size_t size() const { return entries_.size(); }
  const CacheEntry& entry(std::size_t device) const { return entries_.at(device); }

 private:
  std::vector<CacheEntry> entries_;
};

// Exact (unquantized) measurement of one device, as a lockstep controller sees it.
modbus::DecodedMeasurement measurement_from_state(const modbus::DeviceLayout& layout,
                                                  const plant::PlantState& state);

// Statuses and reference powers of the previous cycle, indexed by plant load.
// Empty vectors mean "no previous plan".
struct PreviousPlan {
  std::vector<double> status;
  std::vector<double> ref_mw;
};

struct AssembledProblem {
  ShedProblem problem;
  std::vector<std::size_t> plant_load;  // problem load -> plant load index
  std::vector<std::string> warnings;
};

AssembledProblem assemble_problem(const MeasurementCache& cache,
                                  const std::vector<modbus::DeviceLayout>& layouts,
                                  const plant::PlantConfig& plant, const Mission& mission,
                                  const ControllerConfig& config, const PreviousPlan& previous);

// FNV-1a over the numeric inputs of a problem.
std::uint64_t digest(const ShedProblem& problem);

struct CycleRecord {
  std::uint64_t index = 0;
  SimTime started_at = 0;
  SimTime decided_at = 0;
  bool starved = false;
  bool halted = false;
  std::size_t responses = 0;  // replies to this cycle's polls
  std::size_t failures = 0;
  std::size_t fresh = 0;  // cache updates since the previous decision
  std::uint64_t inputs_digest = 0;
  double capacity_mw = 0.0;
  double demand_mw = 0.0;
  std::vector<double> status;  // plan per plant load
  double objective = 0.0;
  double solve_seconds = 0.0;
  std::uint64_t nodes = 0;
  bool infeasible = false;
  bool ramp_relaxed = false;
  std::vector<std::string> warnings;
};

class Controller {
 public:
  using CycleHandler = std::function<void(const CycleRecord&)>;

  Controller(netsim::EventQueue& events, plant::Plant& plant,
             std::vector<modbus::DeviceLayout> layouts, Mission mission, ControllerConfig config);
  Controller(const Controller&) = delete;
  Controller& operator=(const Controller&) = delete;

  // Required before start() in asynchronous mode; one address per layout.
  void attach(modbus::Master& master, std::vector<netsim::Ipv4Address> device_addresses);
  void start();

  // A halted controller skips its cycles entirely.
  void set_halted(bool halted) { halted_ = halted; }
  void on_cycle(CycleHandler handler) { on_cycle_ = std::move(handler); }
  // Runs at every cycle boundary before the controller reads anything.
  void on_cycle_start(std::function<void()> handler) { on_cycle_start_ = std::move(handler); }

  const ControllerConfig& config() const { return config_; }
  const Mission& mission() const { return mission_; }
  const MeasurementCache& cache() const { return cache_; }
  const std::vector<CycleRecord>& log() const { return log_; }
  const std::vector<double>& plan() const { return plan_; }
  const PreviousPlan& previous() const { return previous_; }
  const std::vector<modbus::DeviceLayout>& layouts() const { return layouts_; }

  std::uint64_t starved_cycles() const { return starved_; }
  std::uint64_t writes_sent() const { return writes_sent_; }
  std::uint64_t writes_acked() const { return writes_acked_; }
  std::uint64_t write_failures() const { return write_failures_; }

 private:
  void schedule(SimTime at);
  void cycle();
  void poll_all();
  void decide();
  void dispatch(const AssembledProblem& assembled, const ShedPlan& plan);
  void finish(CycleRecord record);

  netsim::EventQueue& events_;
  plant::Plant& plant_;
  std::vector<modbus::DeviceLayout> layouts_;
  Mission mission_;
  ControllerConfig config_;
  MeasurementCache cache_;
  modbus::Master* master_ = nullptr;
  std::vector<netsim::Ipv4Address> addresses_;

  std::vector<double> plan_;
  PreviousPlan previous_;
  bool halted_ = false;
  bool started_ = false;

  // Current asynchronous cycle.
  std::uint64_t cycle_index_ = 0;
  bool deciding_ = false;
  CycleRecord pending_;
  std::size_t outstanding_ = 0;
  netsim::EventId deadline_ = 0;

  std::vector<std::vector<std::uint16_t>> acked_;
  std::vector<std::optional<std::vector<std::uint16_t>>> in_flight_;

  std::vector<CycleRecord> log_;
  CycleHandler on_cycle_;
  std::function<void()> on_cycle_start_;
  std::uint64_t fresh_ = 0;
  std::uint64_t starved_ = 0;
  std::uint64_t writes_sent_ = 0;
  std::uint64_t writes_acked_ = 0;
  std::uint64_t write_failures_ = 0;
};

}  // namespace shipcps::controller
