#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace shipcps {

// Virtual time and durations, in integer nanoseconds. Integer ticks keep
// event ordering exact and runs reproducible across platforms.
using SimTime = std::int64_t;

inline constexpr SimTime kNanosPerSecond = 1'000'000'000;
inline constexpr SimTime kNanosPerMilli = 1'000'000;
inline constexpr SimTime kTimeInfinity = std::numeric_limits<SimTime>::max();

inline SimTime from_seconds(double seconds) {
  return static_cast<SimTime>(std::llround(seconds * 1e9));
}

inline double to_seconds(SimTime t) { return static_cast<double>(t) * 1e-9; }

inline constexpr SimTime millis(std::int64_t ms) { return ms * kNanosPerMilli; }

}  // namespace shipcps
