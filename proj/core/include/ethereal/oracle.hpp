#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ethereal/units.hpp"

namespace ethereal {

/// `count` flows of `size` bytes each, all leaving one source toward one destination leaf.
struct DemandGroup {
    std::uint64_t count = 0;
    Bytes size = 0;
};

struct DemandInstance {
    std::uint32_t uplinks = 0;
    std::vector<DemandGroup> groups;

    std::uint64_t total_flows() const;
    ExactBytes total_bytes() const;
};

class EnumerationTooLarge : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Upper limit on uplinks^flows accepted by brute_force_unsplit.
inline constexpr std::uint64_t kEnumerationLimit = 10'000'000;

/// Exact minimum over all unsplit flow-to-uplink assignments of the maximum uplink load.
ExactBytes brute_force_unsplit(const DemandInstance& inst);

/// Total demand spread evenly over all uplinks: the per-uplink load of ideal spraying.
ExactBytes fractional_lower_bound(const DemandInstance& inst);

/// Smallest gamma >= 1 such that r * gamma is a multiple of s, found by scanning.
std::uint64_t verify_min_split(std::uint64_t r, std::uint64_t s);

}  // namespace ethereal
