#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "shipcps/adversary/adversary.hpp"
#include "shipcps/controller/controller.hpp"
#include "shipcps/faultgen/faultgen.hpp"
#include "shipcps/modbus/endpoint.hpp"
#include "shipcps/netsim/network.hpp"
#include "shipcps/netsim/transport.hpp"
#include "shipcps/plant.hpp"
#include "shipcps/scenario/config.hpp"
#include "shipcps/telemetry/telemetry.hpp"

namespace shipcps::scenario {

// Checks cross references (generators, loads, devices, links, attack
// targets, missions) against the network the scenario would build.
std::vector<Diagnostic> cross_check(const ScenarioConfig& config);

// Validates a file end to end; an empty result means it is runnable.
std::vector<Diagnostic> validate_file(const std::string& path);

// Counters over every trace record, kept or not.
struct NetworkStats {
  SimTime bin = kNanosPerSecond;
  std::map<std::string, std::uint64_t> drops_by_reason;
  std::map<std::string, std::uint64_t> drops_by_link;
  // Per bin at the controller host.
  std::vector<std::uint64_t> controller_rx_bytes;
  std::vector<std::uint64_t> controller_tx_bytes;
  std::vector<std::uint64_t> controller_rx_frames;
  std::vector<std::uint64_t> attacker_tx_frames;
  std::vector<std::uint64_t> queue_drops;
  std::uint64_t modified_frames = 0;

  void add(const telemetry::PacketTraceRecord& r, const std::string& controller, const std::string& attacker);
};

// One controller cycle as seen by the runner: what the cache held against the
// plant truth at decision time.
struct CycleView {
  controller::CycleRecord record;
  std::vector<double> seen_ref_mw;  // per plant load, NaN when unknown
  std::vector<double> true_ref_mw;
  double true_available_mw = 0.0;
  double true_served_mw = 0.0;
};

// The assembled simulation: plant, network, devices, controller, faults,
// attacks and observers on one event queue.
class Testbed {
 public:
  explicit Testbed(ScenarioConfig config);
  ~Testbed();
  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;

  // Streams trace lines and timeseries rows while running; either may be null.
  void set_trace_sink(std::ostream* sink) { trace_.set_sink(sink); }
  void set_timeseries_sink(std::ostream* sink);

  // Runs the event loop to `until_s` (the scenario duration by default).
  void run(std::optional<double> until_s = std::nullopt);

  const ScenarioConfig& config() const { return config_; }
  double ran_until() const { return ran_until_; }
  netsim::EventQueue& events() { return events_; }
  const plant::Plant& plant() const { return *plant_; }
  const std::vector<plant::PlantState>& plant_log() const { return plant_log_; }
  netsim::Network& network() { return *network_; }
  const controller::Controller& controller() const { return *controller_; }
  const modbus::Master* master() const { return master_.get(); }
  const std::vector<modbus::DeviceLayout>& layouts() const { return layouts_; }
  const telemetry::TraceRecorder& trace() const { return trace_; }
  const NetworkStats& network_stats() const { return stats_; }
  const telemetry::OverShedDetector& over_shed() const { return *over_shed_; }
  const telemetry::OperabilityAccumulator& operability() const { return *operability_; }
  const std::vector<CycleView>& cycles() const { return cycles_; }
  const std::vector<std::unique_ptr<adversary::DosAttack>>& dos_attacks() const { return dos_; }
  const std::vector<std::unique_ptr<adversary::MitmAttack>>& mitm_attacks() const { return mitm_; }
  const faultgen::FaultInjector* faults() const { return faults_.get(); }
  const modbus::Gateway* gateway(const std::string& device) const;
  netsim::Ipv4Address address(const std::string& node) const;

 private:
  void build();
  void schedule_step(SimTime at);
  void on_step(const plant::PlantState& state);

  ScenarioConfig config_;
  netsim::EventQueue events_;
  std::unique_ptr<plant::Plant> plant_;
  std::vector<modbus::DeviceLayout> layouts_;
  std::unique_ptr<netsim::Network> network_;
  std::vector<std::unique_ptr<netsim::Transport>> transports_;
  std::vector<std::unique_ptr<modbus::Gateway>> gateways_;
  std::unique_ptr<modbus::Master> master_;
  std::unique_ptr<controller::Controller> controller_;
  std::unique_ptr<faultgen::FaultInjector> faults_;
  std::vector<std::unique_ptr<adversary::DosAttack>> dos_;
  std::vector<std::unique_ptr<adversary::MitmAttack>> mitm_;
  telemetry::TraceRecorder trace_;
  NetworkStats stats_;
  std::unique_ptr<telemetry::OverShedDetector> over_shed_;
  std::unique_ptr<telemetry::OperabilityAccumulator> operability_;
  controller::Mission mission_;
  std::vector<plant::PlantState> plant_log_;
  std::vector<CycleView> cycles_;
  std::ostream* timeseries_ = nullptr;
  std::uint64_t steps_ = 0;
  double ran_until_ = 0.0;
};

// Digest of a finished run; what summary.json holds.
nlohmann::json summarize(const Testbed& testbed);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> until_s;
};

struct RunResult {
  nlohmann::json summary;
  std::filesystem::path out_dir;
  bool violation = false;
};

// Runs a validated scenario and writes trace.jsonl, timeseries.csv,
// decisions.jsonl, summary.json and manifest.json into the output directory.
// Files are written under temporary names and renamed when complete.
RunResult run_scenario(ScenarioConfig config, const RunOptions& options);

// Output directory when neither the command line nor the scenario names one.
std::filesystem::path default_out_dir(const ScenarioConfig& config);
inline constexpr const char* kOutDirEnv = "SHIPCPS_OUT_DIR";

// Human-readable digest of an output directory. Throws std::runtime_error
// when artifacts are missing.
void report(const std::filesystem::path& dir, std::ostream& out, const std::vector<std::string>& columns = {});

}  // namespace shipcps::scenario
