#include "shipcps/modbus/registers.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace shipcps::modbus {

namespace {

std::uint16_t saturate(double scaled) {
  const double r = std::floor(scaled + 0.5);
  return static_cast<std::uint16_t>(std::clamp(r, 0.0, 65535.0));
}

}  // namespace

std::uint16_t encode_kw(double mw) { return saturate(mw * 1000.0); }
double decode_kw(std::uint16_t kw) { return kw / 1000.0; }
std::uint16_t encode_permille(double status) { return saturate(status * 1000.0); }
double decode_permille(std::uint16_t permille) { return permille / 1000.0; }

Pdu serve(RegisterFile& registers, const Pdu& request) {
  const std::uint8_t fn = request.function;
  switch (fn) {
    case function::kReadHolding:
    case function::kReadInput: {
      if (request.quantity < 1 || request.quantity > kMaxReadQuantity) {
        return exception_response(fn, exception_code::kIllegalValue);
      }
      const auto& bank = fn == function::kReadHolding ? registers.holding : registers.input;
      if (static_cast<std::size_t>(request.address) + request.quantity > bank.size()) {
        return exception_response(fn, exception_code::kIllegalAddress);
      }
      const auto first = bank.begin() + request.address;
      return read_response(fn, std::vector<std::uint16_t>(first, first + request.quantity));
    }
    case function::kWriteMultiple: {
      if (request.quantity < 1 || request.quantity > kMaxWriteQuantity ||
          request.values.size() != request.quantity) {
        return exception_response(fn, exception_code::kIllegalValue);
      }
      if (static_cast<std::size_t>(request.address) + request.quantity > registers.holding.size()) {
        return exception_response(fn, exception_code::kIllegalAddress);
      }
      std::copy(request.values.begin(), request.values.end(),
                registers.holding.begin() + request.address);
      return write_response(request.address, request.quantity);
    }
    default:
      return exception_response(fn, exception_code::kIllegalFunction);
  }
}

std::vector<DeviceLayout> device_layouts(const plant::PlantConfig& config) {
  std::vector<DeviceLayout> layouts;
  std::map<std::string, std::size_t> by_name;
  auto slot = [&](const std::string& name, int zone, DeviceKind kind) -> DeviceLayout& {
    auto [it, inserted] = by_name.try_emplace(name, layouts.size());
    if (inserted) {
      DeviceLayout d;
      d.name = name;
      d.zone = zone;
      d.kind = kind;
      d.unit_id = static_cast<std::uint8_t>(layouts.size() + 1);
      layouts.push_back(std::move(d));
    } else if (layouts[it->second].kind != kind) {
      throw plant::PlantError("device " + name + " mixes generators and loads");
    }
    return layouts[it->second];
  };
  for (std::size_t g = 0; g < config.generators.size(); ++g) {
    const auto& spec = config.generators[g];
    auto& d = slot(spec.device.empty() ? spec.id : spec.device, spec.zone, DeviceKind::kGenerator);
    if (d.generator) throw plant::PlantError("device " + d.name + " reports two generators");
    d.generator = g;
    d.gen_rating_mw = spec.rating_mw;
  }
  for (std::size_t i = 0; i < config.loads.size(); ++i) {
    const auto& spec = config.loads[i];
    if (!spec.controllable) continue;
    auto& d = slot(spec.device.empty() ? spec.id : spec.device, spec.zone, DeviceKind::kLoadGroup);
    d.loads.push_back(i);
    if (kFirstSignalRegister + 2 * d.loads.size() > kRegisterCount) {
      throw plant::PlantError("device " + d.name + " has too many loads for its register file");
    }
  }
  if (layouts.size() > 247) throw plant::PlantError("more devices than Modbus unit ids");
  return layouts;
}

void write_measurements(const DeviceLayout& layout, const plant::PlantState& state,
                        RegisterFile& registers) {
  const auto ms = static_cast<std::uint32_t>(std::llround(state.t * 1000.0));
  registers.input[kTimeRegister] = static_cast<std::uint16_t>(ms >> 16);
  registers.input[kTimeRegister + 1] = static_cast<std::uint16_t>(ms & 0xFFFF);
  if (layout.generator) {
    const std::size_t g = *layout.generator;
    registers.input[kFirstSignalRegister] = encode_kw(state.gen_available[g]);
    registers.input[kFirstSignalRegister + 1] = encode_kw(layout.gen_rating_mw);
    return;
  }
  for (std::size_t k = 0; k < layout.loads.size(); ++k) {
    const std::size_t i = layout.loads[k];
    registers.input[kFirstSignalRegister + 2 * k] = encode_kw(state.load_ref[i]);
    registers.input[kFirstSignalRegister + 2 * k + 1] = encode_permille(state.load_status[i]);
  }
}

std::optional<DecodedMeasurement> decode_measurements(const DeviceLayout& layout,
                                                      const std::vector<std::uint16_t>& input) {
  if (input.size() < layout.input_registers_used()) return std::nullopt;
  DecodedMeasurement m;
  const std::uint32_t ms = (static_cast<std::uint32_t>(input[0]) << 16) | input[1];
  m.measured_at = static_cast<SimTime>(ms) * kNanosPerMilli;
  if (layout.generator) {
    m.gen_available = decode_kw(input[kFirstSignalRegister]);
    m.gen_rating = decode_kw(input[kFirstSignalRegister + 1]);
    return m;
  }
  for (std::size_t k = 0; k < layout.loads.size(); ++k) {
    m.load_ref.push_back(decode_kw(input[kFirstSignalRegister + 2 * k]));
    m.load_status.push_back(decode_permille(input[kFirstSignalRegister + 2 * k + 1]));
  }
  return m;
}

}  // namespace shipcps::modbus
