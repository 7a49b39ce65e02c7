#include "shipcps/scenario/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace shipcps::scenario {

namespace {

constexpr std::uint64_t kFaultStream = 0xfa17;
constexpr std::uint64_t kDosStream = 0xd05;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::size_t index) {
  return netsim::splitmix64(seed ^ netsim::splitmix64(stream * 1000003ull + index));
}

std::vector<netsim::DeviceNode> device_nodes(const std::vector<modbus::DeviceLayout>& layouts) {
  std::vector<netsim::DeviceNode> out;
  out.reserve(layouts.size());
  for (const auto& l : layouts) out.push_back({l.name, l.zone});
  return out;
}

controller::MissionDb build_missions(const ScenarioConfig& config, const plant::PlantConfig& plant) {
  if (config.missiondb.missions.empty()) return controller::MissionDb::from_plant(plant);
  controller::MissionDb db;
  for (const auto& m : config.missiondb.missions) db.add(m);
  return db;
}

const modbus::DeviceLayout* find_layout(const std::vector<modbus::DeviceLayout>& layouts, const std::string& name) {
  for (const auto& l : layouts) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

std::vector<std::string> expand_devices(const std::vector<std::string>& names,
                                        const std::vector<modbus::DeviceLayout>& layouts) {
  if (names.size() == 1 && names[0] == "all") {
    std::vector<std::string> out;
    for (const auto& l : layouts) out.push_back(l.name);
    return out;
  }
  return names;
}

faultgen::FaultSpec fault_spec(const ScenarioConfig& config, const FaultEntry& entry, std::size_t index,
                               const std::vector<modbus::DeviceLayout>& layouts) {
  auto spec = entry.spec;
  spec.devices = expand_devices(spec.devices, layouts);
  spec.seed = derive_seed(config.seed, kFaultStream, index);
  return spec;
}

}  // namespace

// ---------------------------------------------------------------- validation

std::vector<Diagnostic> cross_check(const ScenarioConfig& config) {
  std::vector<Diagnostic> out;
  auto error = [&](Location where, std::string message) {
    out.push_back({config.source, where, std::move(message)});
  };

  const auto plant_config = build_plant_config(config);
  for (const auto& trip : config.plant.trips) {
    const bool known = std::any_of(plant_config.generators.begin(), plant_config.generators.end(),
                                   [&](const auto& g) { return g.id == trip.generator; });
    if (!known) error(trip.where, "unknown generator " + trip.generator);
    if (trip.time_s > config.duration_s) error(trip.where, "trip after the end of the run");
  }
  try {
    plant::Plant check(plant_config);
  } catch (const std::exception& e) {
    error({}, std::string("plant: ") + e.what());
    return out;
  }

  try {
    const auto db = build_missions(config, plant_config);
    db.validate_against(plant_config);
    if (!db.contains(config.missiondb.active)) {
      error(config.missiondb.where, "active mission '" + config.missiondb.active + "' not defined");
    }
  } catch (const controller::ConfigError& e) {
    error(config.missiondb.where, std::string("missiondb: ") + e.what());
  }

  const auto layouts = modbus::device_layouts(plant_config);
  netsim::EventQueue events;
  std::unique_ptr<netsim::Network> network;
  try {
    network = std::make_unique<netsim::Network>(events, netsim::ship_topology(config.topology, device_nodes(layouts), true));
  } catch (const std::exception& e) {
    error({}, std::string("topology: ") + e.what());
    return out;
  }
  faultgen::GatewayMap names;
  for (const auto& l : layouts) names[l.name] = nullptr;

  for (std::size_t i = 0; i < config.faults.size(); ++i) {
    const auto& f = config.faults[i];
    try {
      faultgen::validate(fault_spec(config, f, i, layouts), *network, names);
    } catch (const faultgen::FaultError& e) {
      error(f.where, e.what());
    }
  }

  auto& attacker = network->host(netsim::kAttackerNode);
  for (const auto& a : config.attacks) {
    if (a.kind == AttackKind::kDos) {
      const auto* target = network->find_host(a.target);
      if (target == nullptr) {
        error(a.where, "dos: unknown target " + a.target);
        continue;
      }
      adversary::DosSpec spec;
      spec.target = target->ip();
      spec.rate_pps = a.rate_pps;
      spec.start_s = a.start_s;
      spec.end_s = a.end_s;
      try {
        adversary::validate(spec, *network);
      } catch (const adversary::AttackError& e) {
        error(a.where, e.what());
      }
      continue;
    }
    const auto* victim = network->find_host(a.victim);
    const auto* layout = find_layout(layouts, a.victim);
    if (victim == nullptr || layout == nullptr) {
      error(a.where, "mitm: unknown device " + a.victim);
      continue;
    }
    adversary::MitmSpec spec;
    spec.victim_a = victim->ip();
    spec.victim_b = network->host(netsim::kControllerNode).ip();
    spec.rewrite = {layout->unit_id, a.first_register, a.last_register, a.value};
    spec.start_s = a.start_s;
    spec.end_s = a.end_s;
    spec.poison_period_s = a.poison_period_s;
    try {
      adversary::validate(spec, *network, attacker);
    } catch (const adversary::AttackError& e) {
      error(a.where, e.what());
    }
    if (a.last_register >= layout->input_registers_used()) {
      error(a.where, "mitm: register " + std::to_string(a.last_register) + " beyond the device's inputs");
    }
  }

  for (const auto& p : config.phases) {
    if (p.end_s > config.duration_s) error(p.where, "phase '" + p.name + "' ends after the run");
  }
  return out;
}

std::vector<Diagnostic> validate_file(const std::string& path) {
  try {
    return cross_check(load_scenario(path));
  } catch (const ValidationError& e) {
    return e.diagnostics();
  }
}

// ---------------------------------------------------------------- stats

namespace {

void bump(std::vector<std::uint64_t>& bins, std::size_t index, std::uint64_t amount) {
  if (bins.size() <= index) bins.resize(index + 1, 0);
  bins[index] += amount;
}

}  // namespace

void NetworkStats::add(const telemetry::PacketTraceRecord& r, const std::string& controller,
                       const std::string& attacker) {
  const auto index = static_cast<std::size_t>(std::max<SimTime>(r.time, 0) / bin);
  if (r.disposition == netsim::Disposition::kModified && r.direction == telemetry::Direction::kTx) ++modified_frames;
  if (r.direction == telemetry::Direction::kDrop) {
    ++drops_by_reason[r.drop_reason];
    ++drops_by_link[r.node];
    if (r.drop_reason == netsim::to_string(netsim::DropReason::kQueueFull)) bump(queue_drops, index, 1);
    return;
  }
  if (r.node == controller) {
    if (r.direction == telemetry::Direction::kRx) {
      bump(controller_rx_bytes, index, r.size);
      bump(controller_rx_frames, index, 1);
    } else {
      bump(controller_tx_bytes, index, r.size);
    }
  } else if (r.node == attacker && r.direction == telemetry::Direction::kTx) {
    bump(attacker_tx_frames, index, 1);
  }
}

// ---------------------------------------------------------------- testbed

Testbed::Testbed(ScenarioConfig config) : config_(std::move(config)) {
  auto diagnostics = cross_check(config_);
  if (!diagnostics.empty()) throw ValidationError(std::move(diagnostics));
  build();
}

Testbed::~Testbed() = default;

void Testbed::build() {
  plant_ = std::make_unique<plant::Plant>(build_plant_config(config_));
  layouts_ = modbus::device_layouts(plant_->config());
  mission_ = build_missions(config_, plant_->config()).at(config_.missiondb.active);

  network_ = std::make_unique<netsim::Network>(
      events_, netsim::ship_topology(config_.topology, device_nodes(layouts_), true));
  auto& controller_host = network_->host(netsim::kControllerNode);

  modbus::GatewayConfig gateway_config;
  gateway_config.period = from_seconds(config_.gateways.period_s);
  gateway_config.phase = from_seconds(config_.gateways.phase_s);
  gateway_config.publish = config_.gateways.publish;
  gateway_config.report_to = controller_host.ip();
  std::vector<netsim::Ipv4Address> addresses;
  faultgen::GatewayMap gateway_map;
  for (const auto& layout : layouts_) {
    auto& host = network_->host(layout.name);
    transports_.push_back(std::make_unique<netsim::Transport>(host, config_.transport));
    gateways_.push_back(std::make_unique<modbus::Gateway>(*transports_.back(), *plant_, layout, gateway_config));
    gateway_map[layout.name] = gateways_.back().get();
    addresses.push_back(host.ip());
  }
  transports_.push_back(std::make_unique<netsim::Transport>(controller_host, config_.transport));
  master_ = std::make_unique<modbus::Master>(*transports_.back(), config_.controller.poll_timeout);

  controller_ = std::make_unique<controller::Controller>(events_, *plant_, layouts_, mission_, config_.controller);
  if (config_.mode == controller::Mode::kAsynchronous) controller_->attach(*master_, addresses);

  over_shed_ = std::make_unique<telemetry::OverShedDetector>(*plant_, *controller_, config_.over_shed_tolerance_mw);
  controller_->on_cycle_start([this] { over_shed_->on_cycle_start(); });
  controller_->on_cycle([this](const controller::CycleRecord& record) {
    CycleView view;
    view.record = record;
    const auto& state = plant_->read_measurements();
    view.true_ref_mw = state.load_ref;
    view.true_available_mw = state.available_mw;
    view.true_served_mw = state.served_mw;
    view.seen_ref_mw.assign(state.load_ref.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t d = 0; d < layouts_.size(); ++d) {
      const auto& entry = controller_->cache().entry(d);
      if (!entry.values) continue;
      for (std::size_t k = 0; k < layouts_[d].loads.size(); ++k) {
        view.seen_ref_mw[layouts_[d].loads[k]] = entry.values->load_ref[k];
      }
    }
    cycles_.push_back(std::move(view));
  });
  operability_ = std::make_unique<telemetry::OperabilityAccumulator>(0.0, config_.duration_s);

  // Only traffic between real hosts is kept for analysis; flood packets with
  // spoofed sources are counted and hashed but not stored.
  std::set<std::uint32_t> real;
  for (const auto& h : network_->hosts()) real.insert(h->ip().value);
  trace_.set_keep_filter([real = std::move(real)](const telemetry::PacketTraceRecord& r) {
    if (r.protocol == "arp") return true;
    return real.count(r.src.value) > 0 && real.count(r.dst.value) > 0;
  });
  trace_.set_observer([this](const telemetry::PacketTraceRecord& r) {
    stats_.add(r, netsim::kControllerNode, netsim::kAttackerNode);
  });
  trace_.attach(*network_);

  faults_ = std::make_unique<faultgen::FaultInjector>(*network_, gateway_map);
  for (std::size_t i = 0; i < config_.faults.size(); ++i) {
    faults_->schedule(fault_spec(config_, config_.faults[i], i, layouts_));
  }

  auto& attacker = network_->host(netsim::kAttackerNode);
  for (std::size_t i = 0; i < config_.attacks.size(); ++i) {
    const auto& a = config_.attacks[i];
    if (a.kind == AttackKind::kDos) {
      adversary::DosSpec spec;
      spec.target = network_->host(a.target).ip();
      spec.port = a.port;
      spec.rate_pps = a.rate_pps;
      spec.payload_bytes = a.payload_bytes;
      spec.start_s = a.start_s;
      spec.end_s = a.end_s;
      spec.seed = derive_seed(config_.seed, kDosStream, i);
      spec.hard_crash = a.hard_crash;
      dos_.push_back(std::make_unique<adversary::DosAttack>(attacker, spec));
      if (a.hard_crash) {
        events_.schedule_at(from_seconds(a.start_s), [this] { controller_->set_halted(true); });
        events_.schedule_at(from_seconds(a.end_s), [this] { controller_->set_halted(false); });
      }
    } else {
      const auto* layout = find_layout(layouts_, a.victim);
      adversary::MitmSpec spec;
      spec.victim_a = network_->host(a.victim).ip();
      spec.victim_b = controller_host.ip();
      spec.rewrite = {layout->unit_id, a.first_register, a.last_register, a.value};
      spec.start_s = a.start_s;
      spec.end_s = a.end_s;
      spec.poison_period_s = a.poison_period_s;
      mitm_.push_back(std::make_unique<adversary::MitmAttack>(attacker, spec));
    }
  }
}

void Testbed::set_timeseries_sink(std::ostream* sink) {
  timeseries_ = sink;
  if (!timeseries_) return;
  *timeseries_ << "t,available_mw,served_mw,violation";
  for (const auto& l : plant_->config().loads) *timeseries_ << ',' << l.id << ".status";
  for (const auto& l : plant_->config().loads) *timeseries_ << ',' << l.id << ".ref_mw";
  *timeseries_ << '\n';
}

const modbus::Gateway* Testbed::gateway(const std::string& device) const {
  for (const auto& g : gateways_) {
    if (g->layout().name == device) return g.get();
  }
  return nullptr;
}

netsim::Ipv4Address Testbed::address(const std::string& node) const { return network_->host(node).ip(); }

void Testbed::schedule_step(SimTime at) {
  // Plant steps run ahead of anything else at the same instant so that
  // observers and the controller see the state of that instant.
  events_.schedule_at(
      at,
      [this] {
        schedule_step(events_.now() + from_seconds(plant_->config().dt));
        on_step(plant_->step());
      },
      -1);
}

void Testbed::on_step(const plant::PlantState& state) {
  plant_log_.push_back(state);
  telemetry::accumulate(*operability_, plant_->config(), mission_, state, plant_->config().dt);
  if (timeseries_ && steps_ % static_cast<std::uint64_t>(config_.outputs.timeseries_stride) == 0) {
    auto& out = *timeseries_;
    out << state.t << ',' << state.available_mw << ',' << state.served_mw << ',' << (state.violation ? 1 : 0);
    for (double s : state.load_status) out << ',' << s;
    for (double r : state.load_ref) out << ',' << r;
    out << '\n';
  }
  ++steps_;
}

void Testbed::run(std::optional<double> until_s) {
  const double until = until_s.value_or(config_.duration_s);
  if (events_.now() == 0 && steps_ == 0) {
    on_step(plant_->read_measurements());
    schedule_step(from_seconds(plant_->config().dt));
    for (auto& g : gateways_) g->start();
    controller_->start();
    for (auto& d : dos_) d->schedule();
    for (auto& m : mitm_) m->schedule();
  }
  // Stop just short of `until` so the last sample covers [until - dt, until).
  events_.run_until(from_seconds(until) - 1);
  over_shed_->finish();
  ran_until_ = until;
}

}  // namespace shipcps::scenario
