#include "shipcps/faultgen/faultgen.hpp"

#include <algorithm>
#include <cmath>

namespace shipcps::faultgen {

std::string_view to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::kExtraDelay: return "extra_delay";
    case FaultKind::kLoss: return "loss";
    case FaultKind::kReportingRate: return "reporting_rate";
  }
  return "unknown";
}

std::optional<FaultKind> parse_fault_kind(std::string_view text) {
  if (text == "extra_delay") return FaultKind::kExtraDelay;
  if (text == "loss") return FaultKind::kLoss;
  if (text == "reporting_rate") return FaultKind::kReportingRate;
  return std::nullopt;
}

namespace {

// Splits "id>" / "id<" into the link id and the direction marker.
std::pair<std::string, char> split_direction(const std::string& id) {
  if (!id.empty() && (id.back() == '>' || id.back() == '<')) {
    return {id.substr(0, id.size() - 1), id.back()};
  }
  return {id, 0};
}

}  // namespace

void validate(const FaultSpec& spec, const netsim::Network& network, const GatewayMap& gateways) {
  const std::string kind(to_string(spec.kind));
  if (!(spec.start_s >= 0.0)) throw FaultError(kind + ": window start must be >= 0");
  if (!(spec.end_s > spec.start_s)) throw FaultError(kind + ": window end before start");
  if (spec.kind == FaultKind::kReportingRate) {
    if (spec.devices.empty()) throw FaultError(kind + ": no devices");
    if (!(spec.period_s > 0.0)) throw FaultError(kind + ": period must be > 0");
    for (const auto& d : spec.devices) {
      if (gateways.count(d) == 0) throw FaultError(kind + ": unknown device " + d);
    }
    return;
  }
  if (spec.links.empty()) throw FaultError(kind + ": no links");
  const auto ids = network.link_ids();
  for (const auto& l : spec.links) {
    const auto base = split_direction(l).first;
    if (std::find(ids.begin(), ids.end(), base) == ids.end()) {
      throw FaultError(kind + ": unknown link " + l);
    }
  }
  if (spec.kind == FaultKind::kExtraDelay && !(spec.delta_s >= 0.0)) {
    throw FaultError(kind + ": delta must be >= 0");
  }
  if (spec.kind == FaultKind::kLoss && !(spec.probability >= 0.0 && spec.probability <= 1.0)) {
    throw FaultError(kind + ": probability outside [0, 1]");
  }
}

FaultInjector::FaultInjector(netsim::Network& network, GatewayMap gateways)
    : network_(network), gateways_(std::move(gateways)) {}

std::vector<netsim::LinkDirection*> FaultInjector::directions(const std::vector<std::string>& ids) {
  std::vector<netsim::LinkDirection*> out;
  for (const auto& id : ids) {
    const auto [base, dir] = split_direction(id);
    auto& link = network_.link(base);
    if (dir != '<') out.push_back(&link.forward);
    if (dir != '>') out.push_back(&link.reverse);
  }
  return out;
}

void FaultInjector::schedule(const FaultSpec& spec) {
  validate(spec, network_, gateways_);
  const std::size_t index = faults_.size();
  faults_.push_back({spec, {}, {}});
  auto& events = network_.events();
  events.schedule_at(std::max(events.now(), from_seconds(spec.start_s)), [this, index] { apply(index); });
  events.schedule_at(std::max(events.now(), from_seconds(spec.end_s)), [this, index] { clear(index); });
}

void FaultInjector::apply(std::size_t index) {
  auto& f = faults_[index];
  switch (f.spec.kind) {
    case FaultKind::kExtraDelay:
      for (auto* d : directions(f.spec.links)) {
        f.handles.emplace_back(d, d->add_extra_delay(from_seconds(f.spec.delta_s)));
      }
      break;
    case FaultKind::kLoss: {
      // Each direction draws from its own stream of the fault's seed.
      for (auto* d : directions(f.spec.links)) {
        f.handles.emplace_back(d, d->add_loss(f.spec.probability, f.spec.seed));
      }
      break;
    }
    case FaultKind::kReportingRate:
      for (const auto& name : f.spec.devices) {
        auto* g = gateways_.at(name);
        f.saved_periods.emplace_back(g, g->period());
        g->set_period(from_seconds(f.spec.period_s));
      }
      break;
  }
  ++applied_;
  ++active_;
}

void FaultInjector::clear(std::size_t index) {
  auto& f = faults_[index];
  for (auto& [d, h] : f.handles) d->remove_fault(h);
  f.handles.clear();
  for (auto& [g, period] : f.saved_periods) g->set_period(period);
  f.saved_periods.clear();
  ++cleared_;
  --active_;
}

}  // namespace shipcps::faultgen
