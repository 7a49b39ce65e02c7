#include "shipcps/controller/controller.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace shipcps::controller {

using modbus::DecodedMeasurement;
using modbus::DeviceKind;
using modbus::DeviceLayout;
using modbus::Outcome;

std::string_view to_string(Mode mode) {
  return mode == Mode::kSynchronous ? "synchronous" : "asynchronous";
}

std::optional<Mode> parse_mode(std::string_view text) {
  if (text == "synchronous" || text == "sync") return Mode::kSynchronous;
  if (text == "asynchronous" || text == "async") return Mode::kAsynchronous;
  return std::nullopt;
}

void ControllerConfig::validate() const {
  if (period <= 0) throw ConfigError("controller period must be positive");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("beta must be in [0, 1)");
  if (!(ramp_min <= 0.0 && ramp_max >= 0.0)) throw ConfigError("ramp limits must bracket 0");
  if (poll_timeout <= 0) throw ConfigError("poll timeout must be positive");
  if (poll_wait <= 0 || poll_wait >= period) {
    throw ConfigError("poll wait must be positive and shorter than the period");
  }
}

// ---------------------------------------------------------------- MissionDb

void MissionDb::add(Mission mission) {
  if (mission.id.empty()) throw ConfigError("mission id is empty");
  for (const auto& [load, m] : mission.loads) {
    if (!(m.weight > 0.0)) throw ConfigError("mission " + mission.id + ": weight of " + load + " must be > 0");
    if (!(m.required >= 0.0 && m.required <= 1.0)) {
      throw ConfigError("mission " + mission.id + ": required status of " + load + " outside [0, 1]");
    }
  }
  const std::string id = mission.id;
  if (!missions_.emplace(id, std::move(mission)).second) throw ConfigError("duplicate mission " + id);
}

const Mission& MissionDb::at(const std::string& id) const {
  auto it = missions_.find(id);
  if (it == missions_.end()) throw ConfigError("unknown mission " + id);
  return it->second;
}

void MissionDb::validate_against(const plant::PlantConfig& plant) const {
  for (const auto& [id, mission] : missions_) {
    for (const auto& [load, m] : mission.loads) {
      const bool known = std::any_of(plant.loads.begin(), plant.loads.end(),
                                     [&](const plant::LoadSpec& l) { return l.id == load; });
      if (!known) throw ConfigError("mission " + id + " names unknown load " + load);
    }
    for (const auto& l : plant.loads) {
      if (l.controllable && mission.loads.count(l.id) == 0) {
        throw ConfigError("mission " + id + " lacks controllable load " + l.id);
      }
    }
  }
}

MissionDb MissionDb::from_plant(const plant::PlantConfig& plant) {
  Mission m;
  m.id = "default";
  for (const auto& l : plant.loads) {
    if (l.controllable) m.loads[l.id] = {l.weight, 1.0};
  }
  MissionDb db;
  db.add(std::move(m));
  return db;
}

// ---------------------------------------------------------------- cache

bool MeasurementCache::offer(std::size_t device, DecodedMeasurement values, SimTime received_at) {
  auto& e = entries_.at(device);
  if (e.values && values.measured_at <= e.values->measured_at) {
    ++e.rejected_stale;
    return false;
  }
  e.values = std::move(values);
  e.received_at = received_at;
  ++e.accepted;
  return true;
}

void MeasurementCache::record(std::size_t device, PollRecord record) {
  entries_.at(device).history.push_back(record);
}

DecodedMeasurement measurement_from_state(const DeviceLayout& layout, const plant::PlantState& state) {
  DecodedMeasurement m;
  m.measured_at = from_seconds(state.t);
  if (layout.generator) {
    m.gen_available = state.gen_available[*layout.generator];
    m.gen_rating = layout.gen_rating_mw;
  }
  for (std::size_t i : layout.loads) {
    m.load_ref.push_back(state.load_ref[i]);
    m.load_status.push_back(state.load_status[i]);
  }
  return m;
}

// ---------------------------------------------------------------- assembly

AssembledProblem assemble_problem(const MeasurementCache& cache, const std::vector<DeviceLayout>& layouts,
                                  const plant::PlantConfig& plant, const Mission& mission,
                                  const ControllerConfig& config, const PreviousPlan& previous) {
  AssembledProblem out;
  auto& p = out.problem;
  p.alpha = config.alpha;
  p.beta = config.beta;
  p.ramp_min = config.ramp_min;
  p.ramp_max = config.ramp_max;
  for (std::size_t d = 0; d < layouts.size(); ++d) {
    const auto& layout = layouts[d];
    const auto& values = cache.entry(d).values;
    if (!values) {
      out.warnings.push_back("no data from " + layout.name);
      if (layout.kind == DeviceKind::kGenerator) p.gen_available.push_back(0.0);
      continue;
    }
    if (layout.kind == DeviceKind::kGenerator) {
      p.gen_available.push_back(values->gen_available);
      continue;
    }
    for (std::size_t k = 0; k < layout.loads.size(); ++k) {
      const std::size_t i = layout.loads[k];
      const auto& spec = plant.loads[i];
      const auto found = mission.loads.find(spec.id);
      const LoadMission m = found != mission.loads.end() ? found->second : LoadMission{spec.weight, 1.0};
      ShedLoad l;
      l.weight = m.weight;
      l.required = m.required;
      l.ref_mw = values->load_ref[k];
      l.steps = spec.steps;
      l.device_index = d;
      const bool known = i < previous.status.size() && !std::isnan(previous.status[i]);
      l.prev_status = known ? previous.status[i] : plant::snap_to_grid(values->load_status[k], spec.steps);
      l.prev_ref_mw = known && i < previous.ref_mw.size() ? previous.ref_mw[i] : l.ref_mw;
      p.loads.push_back(l);
      out.plant_load.push_back(i);
    }
  }
  return out;
}

std::uint64_t digest(const ShedProblem& problem) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 1099511628211ull;
    }
  };
  for (const auto& l : problem.loads) {
    mix(l.weight);
    mix(l.ref_mw);
    mix(l.prev_ref_mw);
    mix(l.prev_status);
    mix(l.required);
    mix(l.steps);
    mix(static_cast<double>(l.device_index));
  }
  for (double g : problem.gen_available) mix(g);
  mix(problem.alpha);
  mix(problem.beta);
  mix(problem.ramp_min);
  mix(problem.ramp_max);
  return h;
}

// ---------------------------------------------------------------- Controller

Controller::Controller(netsim::EventQueue& events, plant::Plant& plant, std::vector<DeviceLayout> layouts,
                       Mission mission, ControllerConfig config)
    : events_(events),
      plant_(plant),
      layouts_(std::move(layouts)),
      mission_(std::move(mission)),
      config_(config),
      cache_(layouts_.size()),
      plan_(plant.config().loads.size(), std::nan("")),
      acked_(layouts_.size()),
      in_flight_(layouts_.size()) {
  config_.validate();
  for (std::size_t d = 0; d < layouts_.size(); ++d) {
    acked_[d].assign(layouts_[d].loads.size(), 1000);
  }
}

void Controller::attach(modbus::Master& master, std::vector<netsim::Ipv4Address> device_addresses) {
  if (device_addresses.size() != layouts_.size()) {
    throw ConfigError("controller needs one address per device");
  }
  master_ = &master;
  addresses_ = std::move(device_addresses);
  master_->set_timeout(config_.poll_timeout);
}

void Controller::start() {
  if (started_) return;
  if (config_.mode == Mode::kAsynchronous && master_ == nullptr) {
    throw ConfigError("asynchronous controller has no Modbus master");
  }
  started_ = true;
  schedule(std::max(config_.first_cycle, events_.now()));
}

void Controller::schedule(SimTime at) {
  events_.schedule_at(at, [this] {
    // The next cycle is fixed before this one runs so that slow cycles never
    // drift the schedule.
    schedule(events_.now() + config_.period);
    cycle();
  });
}

void Controller::cycle() {
  if (on_cycle_start_) on_cycle_start_();
  CycleRecord record;
  record.index = ++cycle_index_;
  record.started_at = events_.now();
  if (halted_) {
    record.halted = true;
    record.decided_at = record.started_at;
    record.status = plan_;
    finish(std::move(record));
    return;
  }
  if (config_.mode == Mode::kSynchronous) {
    const auto& state = plant_.read_measurements();
    for (std::size_t d = 0; d < layouts_.size(); ++d) {
      if (cache_.offer(d, measurement_from_state(layouts_[d], state), events_.now())) ++fresh_;
    }
    record.responses = layouts_.size();
    pending_ = std::move(record);
    deciding_ = true;
    decide();
    return;
  }
  if (deciding_) {
    // Previous cycle never decided; it cannot, since poll_wait < period.
    events_.cancel(deadline_);
    decide();
  }
  pending_ = std::move(record);
  deciding_ = true;
  poll_all();
  if (deciding_) deadline_ = events_.schedule_in(config_.poll_wait, [this] { decide(); });
}

void Controller::poll_all() {
  const std::uint64_t cycle = cycle_index_;
  outstanding_ = layouts_.size();
  for (std::size_t d = 0; d < layouts_.size(); ++d) {
    const auto& layout = layouts_[d];
    master_->read(addresses_[d], layout.unit_id, modbus::function::kReadInput, 0,
                  layout.input_registers_used(), [this, d, cycle](const Outcome& o) {
                    cache_.record(d, {events_.now(), o.kind, o.age});
                    bool ok = false;
                    if (o.kind == Outcome::Kind::kValues) {
                      if (auto m = modbus::decode_measurements(layouts_[d], o.values)) {
                        if (cache_.offer(d, std::move(*m), events_.now())) ++fresh_;
                        ok = true;
                      }
                    }
                    if (cycle != cycle_index_ || !deciding_) return;
                    ok ? ++pending_.responses : ++pending_.failures;
                    if (--outstanding_ == 0) {
                      events_.cancel(deadline_);
                      decide();
                    }
                  });
  }
}

void Controller::decide() {
  if (!deciding_) return;
  deciding_ = false;
  CycleRecord record = std::move(pending_);
  record.decided_at = events_.now();
  record.fresh = fresh_;
  fresh_ = 0;
  if (record.fresh == 0) {
    // Nothing new arrived since the last decision, from this cycle's polls or
    // late replies to earlier ones: keep the previous plan and command nothing.
    record.starved = true;
    ++starved_;
    record.status = plan_;
    finish(std::move(record));
    return;
  }
  const auto assembled =
      assemble_problem(cache_, layouts_, plant_.config(), mission_, config_, previous_);
  const ShedPlan plan = solve(assembled.problem);
  record.inputs_digest = digest(assembled.problem);
  record.capacity_mw = assembled.problem.capacity();
  for (const auto& l : assembled.problem.loads) record.demand_mw += l.ref_mw;
  record.objective = plan.objective;
  record.solve_seconds = plan.solve_seconds;
  record.nodes = plan.nodes;
  record.infeasible = plan.infeasible;
  record.ramp_relaxed = plan.ramp_relaxed;
  record.warnings = assembled.warnings;

  previous_.status.assign(plan_.size(), std::nan(""));
  previous_.ref_mw.assign(plan_.size(), 0.0);
  for (std::size_t k = 0; k < assembled.plant_load.size(); ++k) {
    const std::size_t i = assembled.plant_load[k];
    plan_[i] = plan.status[k];
    previous_.status[i] = plan.status[k];
    previous_.ref_mw[i] = assembled.problem.loads[k].ref_mw;
  }
  record.status = plan_;
  dispatch(assembled, plan);
  finish(std::move(record));
}

void Controller::dispatch(const AssembledProblem& assembled, const ShedPlan& plan) {
  if (config_.mode == Mode::kSynchronous) {
    for (std::size_t k = 0; k < assembled.plant_load.size(); ++k) {
      plant_.apply_command(assembled.plant_load[k], plan.status[k]);
    }
    return;
  }
  for (std::size_t d = 0; d < layouts_.size(); ++d) {
    const auto& layout = layouts_[d];
    if (layout.loads.empty() || !cache_.entry(d).values) continue;
    std::vector<std::uint16_t> values;
    for (std::size_t i : layout.loads) values.push_back(modbus::encode_permille(plan_[i]));
    if (values == acked_[d] || (in_flight_[d] && *in_flight_[d] == values)) continue;
    in_flight_[d] = values;
    ++writes_sent_;
    master_->write(addresses_[d], layout.unit_id, 0, values, [this, d, values](const Outcome& o) {
      if (in_flight_[d] && *in_flight_[d] == values) in_flight_[d].reset();
      if (o.kind == Outcome::Kind::kWriteAck) {
        ++writes_acked_;
        acked_[d] = values;
      } else {
        ++write_failures_;
      }
    });
  }
}

void Controller::finish(CycleRecord record) {
  log_.push_back(std::move(record));
  if (on_cycle_) on_cycle_(log_.back());
}

}  // namespace shipcps::controller
