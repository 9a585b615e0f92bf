#pragma once

#include <cstdint>
#include <limits>

#include <boost/rational.hpp>

namespace ethereal {

/// Simulated time in integer picoseconds.
using SimTime = std::int64_t;
using Bytes = std::uint64_t;
/// Exact byte quantities for load-balancing arithmetic (fragments may be fractional).
using ExactBytes = boost::rational<std::int64_t>;

inline constexpr SimTime kPicosPerSecond = 1'000'000'000'000;
inline constexpr SimTime kTimeNever = std::numeric_limits<SimTime>::max();

constexpr SimTime from_ns(double ns) { return static_cast<SimTime>(ns * 1e3 + 0.5); }
constexpr SimTime from_us(double us) { return static_cast<SimTime>(us * 1e6 + 0.5); }
constexpr SimTime from_ms(double ms) { return static_cast<SimTime>(ms * 1e9 + 0.5); }
constexpr SimTime from_seconds(double s) { return static_cast<SimTime>(s * 1e12 + 0.5); }
constexpr double to_seconds(SimTime t) { return static_cast<double>(t) / 1e12; }
constexpr double to_us(SimTime t) { return static_cast<double>(t) / 1e6; }

/// Serialization delay of `bytes` on a link running at `bits_per_second`, rounded up.
constexpr SimTime serialization_time(Bytes bytes, double bits_per_second) {
    const double ps = static_cast<double>(bytes) * 8.0 * 1e12 / bits_per_second;
    const auto whole = static_cast<SimTime>(ps);
    return (static_cast<double>(whole) < ps) ? whole + 1 : whole;
}

inline constexpr Bytes kKiB = 1024;
inline constexpr Bytes kMiB = 1024 * 1024;

}  // namespace ethereal
