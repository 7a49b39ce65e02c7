#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shipcps/modbus/codec.hpp"
#include "shipcps/plant.hpp"

namespace shipcps::modbus {

inline constexpr std::size_t kRegisterCount = 16;

struct RegisterFile {
  std::vector<std::uint16_t> holding = std::vector<std::uint16_t>(kRegisterCount, 0);
  std::vector<std::uint16_t> input = std::vector<std::uint16_t>(kRegisterCount, 0);
};

// Answers one request against the register file. Never fails: problems come
// back as exception responses.
Pdu serve(RegisterFile& registers, const Pdu& request);

// MW <-> kW, round half up, saturating at the u16 range.
std::uint16_t encode_kw(double mw);
double decode_kw(std::uint16_t kw);
// Status fraction <-> per mille.
std::uint16_t encode_permille(double status);
double decode_permille(std::uint16_t permille);

enum class DeviceKind { kLoadGroup, kGenerator };

// Input register layout:
//   0, 1          measurement time in ms (high word, low word)
//   load group:   2 + 2k = reference power of load k (kW), 3 + 2k = status (per mille)
//   generator:    2 = available power (kW), 3 = rating (kW)
// Holding register k = status command for load k (per mille).
inline constexpr std::uint16_t kTimeRegister = 0;
inline constexpr std::uint16_t kFirstSignalRegister = 2;

struct DeviceLayout {
  std::string name;
  int zone = 1;
  std::uint8_t unit_id = 1;
  DeviceKind kind = DeviceKind::kLoadGroup;
  std::vector<std::size_t> loads;       // plant load indices, register order
  std::optional<std::size_t> generator;  // plant generator index
  double gen_rating_mw = 0.0;

  std::uint16_t input_registers_used() const {
    return static_cast<std::uint16_t>(kFirstSignalRegister + 2 * (generator ? 1 : loads.size()));
  }
};

// Communicating devices in order of first appearance: generators, then
// controllable loads grouped by their device name. Unit id = index + 1.
std::vector<DeviceLayout> device_layouts(const plant::PlantConfig& config);

// Fills the input registers of one device from a plant snapshot.
void write_measurements(const DeviceLayout& layout, const plant::PlantState& state,
                        RegisterFile& registers);

struct DecodedMeasurement {
  SimTime measured_at = 0;
  std::vector<double> load_ref;     // MW, one per layout load
  std::vector<double> load_status;  // fraction
  double gen_available = 0.0;
  double gen_rating = 0.0;
};

// Inverse of write_measurements given the registers starting at address 0.
std::optional<DecodedMeasurement> decode_measurements(const DeviceLayout& layout,
                                                      const std::vector<std::uint16_t>& input);

}  // namespace shipcps::modbus
