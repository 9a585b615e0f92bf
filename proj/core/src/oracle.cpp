#include "ethereal/oracle.hpp"

#include <algorithm>
#include <string>

namespace ethereal {

std::uint64_t DemandInstance::total_flows() const {
    std::uint64_t n = 0;
    for (const auto& g : groups) n += g.count;
    return n;
}

ExactBytes DemandInstance::total_bytes() const {
    ExactBytes sum = 0;
    for (const auto& g : groups) {
        sum += ExactBytes(static_cast<std::int64_t>(g.count) * static_cast<std::int64_t>(g.size));
    }
    return sum;
}

namespace {

class UnsplitSearch {
public:
    UnsplitSearch(std::vector<std::int64_t> flows, std::uint32_t uplinks)
        : flows_(std::move(flows)), loads_(uplinks, 0) {
        std::int64_t total = 0;
        for (auto f : flows_) total += f;
        best_ = total;
    }

    std::int64_t solve() {
        descend(0, 0);
        return best_;
    }

private:
    void descend(std::size_t next, std::int64_t current_max) {
        if (current_max >= best_) return;
        if (next == flows_.size()) {
            best_ = current_max;
            return;
        }
        const std::int64_t f = flows_[next];
        // Uplinks carrying equal load are interchangeable; try each distinct load once.
        std::vector<std::int64_t> tried;
        for (std::size_t u = 0; u < loads_.size(); ++u) {
            if (std::find(tried.begin(), tried.end(), loads_[u]) != tried.end()) continue;
            tried.push_back(loads_[u]);
            loads_[u] += f;
            descend(next + 1, std::max(current_max, loads_[u]));
            loads_[u] -= f;
        }
    }

    std::vector<std::int64_t> flows_;
    std::vector<std::int64_t> loads_;
    std::int64_t best_ = 0;
};

}  // namespace

ExactBytes brute_force_unsplit(const DemandInstance& inst) {
    if (inst.uplinks == 0) throw std::invalid_argument("instance needs at least one uplink");
    const std::uint64_t flows = inst.total_flows();
    std::uint64_t space = 1;
    for (std::uint64_t i = 0; i < flows; ++i) {
        space *= inst.uplinks;
        if (space > kEnumerationLimit) {
            throw EnumerationTooLarge("instance has more than " + std::to_string(kEnumerationLimit) +
                                      " unsplit assignments");
        }
    }
    std::vector<std::int64_t> sizes;
    sizes.reserve(flows);
    for (const auto& g : inst.groups) {
        for (std::uint64_t i = 0; i < g.count; ++i) sizes.push_back(static_cast<std::int64_t>(g.size));
    }
    // Largest first tightens the bound early.
    std::sort(sizes.begin(), sizes.end(), std::greater<>());
    return ExactBytes(UnsplitSearch(std::move(sizes), inst.uplinks).solve());
}

ExactBytes fractional_lower_bound(const DemandInstance& inst) {
    if (inst.uplinks == 0) throw std::invalid_argument("instance needs at least one uplink");
    return inst.total_bytes() / ExactBytes(inst.uplinks);
}

std::uint64_t verify_min_split(std::uint64_t r, std::uint64_t s) {
    if (r < 1 || r >= s) throw std::invalid_argument("verify_min_split needs 1 <= r < s");
    std::uint64_t gamma = 1;
    while ((r * gamma) % s != 0) ++gamma;
    return gamma;
}

}  // namespace ethereal
