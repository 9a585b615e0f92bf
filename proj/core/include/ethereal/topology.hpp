#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ethereal/units.hpp"

namespace ethereal {

using NodeId = std::uint32_t;
using LinkIndex = std::uint32_t;
using LeafIndex = std::uint32_t;

inline constexpr LinkIndex kNoLink = 0xffffffffu;
/// Source-route labels carry one byte per hop, so no switch may expose more uplinks.
inline constexpr std::uint32_t kMaxUplinksPerSwitch = 256;

enum class Tier : std::uint8_t { LeafSpine, FatTree };
enum class NodeKind : std::uint8_t { Host, Leaf, Spine, Core };
enum class LinkRole : std::uint8_t { HostUp, HostDown, LeafUp, SpineDown, SpineUp, CoreDown };

/// 16-bit source-route label. The most-significant byte is the uplink index
/// consumed by the next switch; every switch swaps the two bytes after forwarding.
class PathId {
public:
    constexpr PathId() = default;
    constexpr explicit PathId(std::uint16_t raw) : raw_(raw) {}

    static constexpr PathId from_hops(std::uint8_t first, std::uint8_t second) {
        return PathId(static_cast<std::uint16_t>((first << 8) | second));
    }

    constexpr std::uint16_t raw() const { return raw_; }
    constexpr std::uint8_t first() const { return static_cast<std::uint8_t>(raw_ >> 8); }
    constexpr std::uint8_t second() const { return static_cast<std::uint8_t>(raw_ & 0xff); }
    constexpr PathId swapped() const { return from_hops(second(), first()); }

    constexpr auto operator<=>(const PathId&) const = default;

private:
    std::uint16_t raw_ = 0;
};

constexpr PathId swap_path_id(PathId p) { return p.swapped(); }

/// A directed edge: `index` is the ordinal among parallel links of the same switch pair.
struct LinkId {
    NodeId from = 0;
    NodeId to = 0;
    std::uint16_t index = 0;

    auto operator<=>(const LinkId&) const = default;
};

struct Link {
    LinkId id;
    LinkRole role = LinkRole::HostUp;
    double capacity_bps = 0;
    SimTime latency = 0;
    LinkIndex reverse = kNoLink;
};

struct Hop {
    LinkIndex link = kNoLink;
    PathId next;
};

class TopologyError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a label names an uplink the switch does not have (corrupted label).
class InvalidRoute : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Immutable CLOS fabric. Node ids are dense: hosts first, then leaves, spines, cores.
class Topology {
public:
    Tier tier() const { return tier_; }
    std::uint32_t num_leaves() const { return leaves_; }
    std::uint32_t num_spines() const { return spines_; }
    std::uint32_t num_cores() const { return cores_; }
    std::uint32_t hosts_per_leaf() const { return hosts_per_leaf_; }
    std::uint32_t parallel_links() const { return parallel_; }
    std::uint32_t num_pods() const { return pods_; }
    std::uint32_t leaves_per_pod() const { return leaves_ / pods_; }
    std::uint32_t spines_per_pod() const { return spines_ / pods_; }
    std::uint32_t cores_per_spine() const;
    double link_capacity() const { return capacity_bps_; }
    SimTime link_latency() const { return latency_; }

    std::uint32_t num_hosts() const { return leaves_ * hosts_per_leaf_; }
    std::uint32_t num_nodes() const;
    NodeKind node_kind(NodeId n) const;
    NodeId leaf_node(LeafIndex l) const { return num_hosts() + l; }
    NodeId spine_node(std::uint32_t s) const { return num_hosts() + leaves_ + s; }
    NodeId core_node(std::uint32_t c) const { return num_hosts() + leaves_ + spines_ + c; }
    LeafIndex leaf_of_host(NodeId host) const { return host / hosts_per_leaf_; }
    std::uint32_t pod_of_leaf(LeafIndex l) const { return l / leaves_per_pod(); }
    std::string node_name(NodeId n) const;
    /// Parses names produced by node_name ("host3", "leaf0", "spine1", "core2").
    std::optional<NodeId> parse_node(std::string_view name) const;

    std::uint32_t uplinks_per_leaf() const;
    std::uint32_t uplinks_per_spine() const;

    const std::vector<Link>& links() const { return links_; }
    const Link& link(LinkIndex i) const { return links_.at(i); }
    std::optional<LinkIndex> find_link(const LinkId& id) const;
    LinkIndex host_uplink(NodeId host) const { return host_up_.at(host); }
    LinkIndex host_downlink(NodeId host) const { return links_[host_up_.at(host)].reverse; }
    /// Switch-to-switch links (leaf<->spine and spine<->core), both directions.
    std::vector<LinkIndex> fabric_links() const;
    /// Leaf<->spine links only, both directions.
    std::vector<LinkIndex> leaf_spine_links() const;

    /// Cached result of enumerate_paths for a leaf pair; empty for src == dst.
    std::span<const PathId> paths(LeafIndex src, LeafIndex dst) const;

    Hop resolve_hop(NodeId at_switch, PathId p, NodeId dst_host) const;
    /// Directed links visited by a packet from src_host to dst_host carrying label p.
    std::vector<LinkIndex> trace(NodeId src_host, NodeId dst_host, PathId p) const;

private:
    friend Topology build_leaf_spine(std::uint32_t, std::uint32_t, std::uint32_t, double, double,
                                     std::uint32_t);
    friend Topology build_fat_tree(std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t,
                                   std::uint32_t, double, double, std::uint32_t);

    Topology() = default;
    LinkIndex add_link_pair(NodeId a, NodeId b, std::uint16_t ordinal, LinkRole up, LinkRole down);
    void finish();
    std::vector<PathId> compute_paths(LeafIndex src, LeafIndex dst) const;
    friend std::vector<PathId> enumerate_paths(const Topology&, LeafIndex, LeafIndex);

    Tier tier_ = Tier::LeafSpine;
    std::uint32_t leaves_ = 0;
    std::uint32_t spines_ = 0;
    std::uint32_t cores_ = 0;
    std::uint32_t hosts_per_leaf_ = 0;
    std::uint32_t parallel_ = 1;
    std::uint32_t pods_ = 1;
    double capacity_bps_ = 0;
    SimTime latency_ = 0;

    std::vector<Link> links_;
    std::vector<LinkIndex> host_up_;
    // Per switch, indexed by flattened uplink / downlink ordinal.
    std::vector<std::vector<LinkIndex>> leaf_up_;
    std::vector<std::vector<LinkIndex>> spine_up_;
    std::vector<std::vector<LinkIndex>> spine_down_;
    std::vector<std::vector<LinkIndex>> core_down_;
    std::vector<std::vector<PathId>> path_cache_;
};

/// Two-tier fabric: every leaf connects to every spine with `parallel_links` links.
Topology build_leaf_spine(std::uint32_t leaves, std::uint32_t spines, std::uint32_t hosts_per_leaf,
                          double capacity_bps, double latency_s, std::uint32_t parallel_links = 1);

/// Three-tier folded Clos. Leaves and spines are split into equal pods; pod spine j
/// connects to core group j. `pods == 0` derives the pod count from the port budget.
Topology build_fat_tree(std::uint32_t leaves, std::uint32_t spines, std::uint32_t cores,
                        std::uint32_t hosts_per_leaf, std::uint32_t parallel_links,
                        double capacity_bps, double latency_s, std::uint32_t pods = 0);

/// Equal-cost up/down paths between two distinct leaves, one per first-hop uplink.
std::vector<PathId> enumerate_paths(const Topology& topo, LeafIndex src_leaf, LeafIndex dst_leaf);

inline Hop resolve_hop(const Topology& topo, NodeId at_switch, PathId p, NodeId dst_host) {
    return topo.resolve_hop(at_switch, p, dst_host);
}

}  // namespace ethereal
