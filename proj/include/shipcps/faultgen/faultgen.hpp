#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shipcps/modbus/endpoint.hpp"
#include "shipcps/netsim/network.hpp"

namespace shipcps::faultgen {

class FaultError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class FaultKind { kExtraDelay, kLoss, kReportingRate };

std::string_view to_string(FaultKind kind);
std::optional<FaultKind> parse_fault_kind(std::string_view text);

struct FaultSpec {
  FaultKind kind = FaultKind::kExtraDelay;
  // Link ids ("access:PMM1") cover both directions; direction ids
  // ("access:PMM1>") cover one.
  std::vector<std::string> links;
  std::vector<std::string> devices;  // reporting_rate only
  double delta_s = 0.0;
  double probability = 0.0;
  std::uint64_t seed = 0;
  double period_s = 0.1;
  double start_s = 0.0;
  double end_s = 0.0;
};

using GatewayMap = std::map<std::string, modbus::Gateway*>;

// Throws FaultError naming the first problem.
void validate(const FaultSpec& spec, const netsim::Network& network, const GatewayMap& gateways);

// Applies faults at window start and removes them at window end, as events.
class FaultInjector {
 public:
  FaultInjector(netsim::Network& network, GatewayMap gateways);
  FaultInjector(const FaultInjector&) = delete;
  FaultInjector& operator=(const FaultInjector&) = delete;

  void schedule(const FaultSpec& spec);

  std::uint64_t applied() const { return applied_; }
  std::uint64_t cleared() const { return cleared_; }
  std::size_t active() const { return active_; }

 private:
  std::vector<netsim::LinkDirection*> directions(const std::vector<std::string>& ids);
  void apply(std::size_t index);
  void clear(std::size_t index);

  struct Scheduled {
    FaultSpec spec;
    std::vector<std::pair<netsim::LinkDirection*, netsim::LinkDirection::FaultHandle>> handles;
    std::vector<std::pair<modbus::Gateway*, SimTime>> saved_periods;
  };

  netsim::Network& network_;
  GatewayMap gateways_;
  std::vector<Scheduled> faults_;
  std::uint64_t applied_ = 0;
  std::uint64_t cleared_ = 0;
  std::size_t active_ = 0;
};

}  // namespace shipcps::faultgen
