#include "ethereal/topology.hpp"

#include <charconv>
#include <numeric>

namespace ethereal {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw TopologyError(what);
}

SimTime latency_from_seconds(double s) {
    require(s >= 0, "link latency must be non-negative");
    return from_seconds(s);
}

}  // namespace

std::uint32_t Topology::cores_per_spine() const {
    return tier_ == Tier::FatTree ? cores_ / spines_per_pod() : 0;
}

std::uint32_t Topology::num_nodes() const { return num_hosts() + leaves_ + spines_ + cores_; }

NodeKind Topology::node_kind(NodeId n) const {
    if (n < num_hosts()) return NodeKind::Host;
    n -= num_hosts();
    if (n < leaves_) return NodeKind::Leaf;
    n -= leaves_;
    if (n < spines_) return NodeKind::Spine;
    n -= spines_;
    if (n < cores_) return NodeKind::Core;
    throw TopologyError("node id out of range");
}

std::string Topology::node_name(NodeId n) const {
    switch (node_kind(n)) {
    case NodeKind::Host: return "host" + std::to_string(n);
    case NodeKind::Leaf: return "leaf" + std::to_string(n - num_hosts());
    case NodeKind::Spine: return "spine" + std::to_string(n - num_hosts() - leaves_);
    case NodeKind::Core: return "core" + std::to_string(n - num_hosts() - leaves_ - spines_);
    }
    return {};
}

std::optional<NodeId> Topology::parse_node(std::string_view name) const {
    struct Prefix {
        std::string_view text;
        std::uint32_t count;
        NodeId base;
    };
    const Prefix prefixes[] = {
        {"host", num_hosts(), 0},
        {"leaf", leaves_, num_hosts()},
        {"spine", spines_, num_hosts() + leaves_},
        {"core", cores_, num_hosts() + leaves_ + spines_},
    };
    for (const auto& p : prefixes) {
        if (!name.starts_with(p.text)) continue;
        const auto digits = name.substr(p.text.size());
        std::uint32_t value = 0;
        const auto* end = digits.data() + digits.size();
        auto [ptr, ec] = std::from_chars(digits.data(), end, value);
        if (digits.empty() || ec != std::errc{} || ptr != end || value >= p.count) return std::nullopt;
        return p.base + value;
    }
    return std::nullopt;
}

std::uint32_t Topology::uplinks_per_leaf() const { return spines_per_pod() * parallel_; }

std::uint32_t Topology::uplinks_per_spine() const {
    return tier_ == Tier::FatTree ? cores_per_spine() * parallel_ : 0;
}

std::optional<LinkIndex> Topology::find_link(const LinkId& id) const {
    for (LinkIndex i = 0; i < links_.size(); ++i) {
        if (links_[i].id == id) return i;
    }
    return std::nullopt;
}

std::vector<LinkIndex> Topology::fabric_links() const {
    std::vector<LinkIndex> out;
    for (LinkIndex i = 0; i < links_.size(); ++i) {
        const auto role = links_[i].role;
        if (role != LinkRole::HostUp && role != LinkRole::HostDown) out.push_back(i);
    }
    return out;
}

std::vector<LinkIndex> Topology::leaf_spine_links() const {
    std::vector<LinkIndex> out;
    for (LinkIndex i = 0; i < links_.size(); ++i) {
        const auto role = links_[i].role;
        if (role == LinkRole::LeafUp || role == LinkRole::SpineDown) out.push_back(i);
    }
    return out;
}

std::span<const PathId> Topology::paths(LeafIndex src, LeafIndex dst) const {
    return path_cache_.at(static_cast<std::size_t>(src) * leaves_ + dst);
}

LinkIndex Topology::add_link_pair(NodeId a, NodeId b, std::uint16_t ordinal, LinkRole up,
                                  LinkRole down) {
    const auto fwd = static_cast<LinkIndex>(links_.size());
    links_.push_back(Link{LinkId{a, b, ordinal}, up, capacity_bps_, latency_, fwd + 1});
    links_.push_back(Link{LinkId{b, a, ordinal}, down, capacity_bps_, latency_, fwd});
    return fwd;
}

Hop Topology::resolve_hop(NodeId at, PathId p, NodeId dst_host) const {
    const LeafIndex dst_leaf = leaf_of_host(dst_host);
    const std::uint32_t par = parallel_;
    switch (node_kind(at)) {
    case NodeKind::Leaf: {
        const LeafIndex leaf = at - num_hosts();
        if (leaf == dst_leaf) return Hop{host_downlink(dst_host), p.swapped()};
        const auto& ups = leaf_up_[leaf];
        if (p.first() >= ups.size()) {
            throw InvalidRoute("uplink index " + std::to_string(p.first()) + " out of range at " +
                               node_name(at));
        }
        return Hop{ups[p.first()], p.swapped()};
    }
    case NodeKind::Spine: {
        const std::uint32_t spine = at - num_hosts() - leaves_;
        const std::uint32_t pod = spine / spines_per_pod();
        if (pod_of_leaf(dst_leaf) == pod) {
            const std::uint32_t local = dst_leaf - pod * leaves_per_pod();
            return Hop{spine_down_[spine][local * par + p.second() % par], p.swapped()};
        }
        const auto& ups = spine_up_[spine];
        if (p.first() >= ups.size()) {
            throw InvalidRoute("uplink index " + std::to_string(p.first()) + " out of range at " +
                               node_name(at));
        }
        return Hop{ups[p.first()], p.swapped()};
    }
    case NodeKind::Core: {
        const std::uint32_t core = at - num_hosts() - leaves_ - spines_;
        const std::uint32_t pod = pod_of_leaf(dst_leaf);
        return Hop{core_down_[core][pod * par + p.second() % par], p.swapped()};
    }
    case NodeKind::Host: break;
    }
    throw InvalidRoute("resolve_hop called on a host");
}

std::vector<LinkIndex> Topology::trace(NodeId src_host, NodeId dst_host, PathId p) const {
    std::vector<LinkIndex> out{host_uplink(src_host)};
    NodeId at = links_[out.back()].id.to;
    while (at != dst_host) {
        if (out.size() > 8) throw InvalidRoute("route does not terminate");
        const Hop hop = resolve_hop(at, p, dst_host);
        out.push_back(hop.link);
        p = hop.next;
        at = links_[hop.link].id.to;
    }
    return out;
}

std::vector<PathId> Topology::compute_paths(LeafIndex src, LeafIndex dst) const {
    std::vector<PathId> out;
    if (src == dst) return out;
    const std::uint32_t first_hops = uplinks_per_leaf();
    const bool inter_pod = tier_ == Tier::FatTree && pod_of_leaf(src) != pod_of_leaf(dst);
    out.reserve(first_hops);
    for (std::uint32_t up = 0; up < first_hops; ++up) {
        std::uint32_t second = 0;
        if (inter_pod) {
            // Map the (source leaf, parallel ordinal) in-link of the spine onto a distinct
            // spine uplink so paths from one leaf stay edge-disjoint.
            const std::uint32_t local = src - pod_of_leaf(src) * leaves_per_pod();
            second = (local * parallel_ + up % parallel_) % uplinks_per_spine();
        }
        out.push_back(PathId::from_hops(static_cast<std::uint8_t>(up),
                                        static_cast<std::uint8_t>(second)));
    }
    return out;
}

void Topology::finish() {
    path_cache_.assign(static_cast<std::size_t>(leaves_) * leaves_, {});
    for (LeafIndex s = 0; s < leaves_; ++s) {
        for (LeafIndex d = 0; d < leaves_; ++d) {
            path_cache_[static_cast<std::size_t>(s) * leaves_ + d] = compute_paths(s, d);
        }
    }
}

Topology build_leaf_spine(std::uint32_t leaves, std::uint32_t spines, std::uint32_t hosts_per_leaf,
                          double capacity_bps, double latency_s, std::uint32_t parallel_links) {
    require(leaves >= 1 && spines >= 1 && hosts_per_leaf >= 1 && parallel_links >= 1,
            "leaf-spine counts must be at least 1");
    require(capacity_bps > 0, "link capacity must be positive");
    require(spines * parallel_links <= kMaxUplinksPerSwitch,
            "more than 256 uplinks per leaf cannot be addressed by a path id");

    Topology t;
    t.tier_ = Tier::LeafSpine;
    t.leaves_ = leaves;
    t.spines_ = spines;
    t.hosts_per_leaf_ = hosts_per_leaf;
    t.parallel_ = parallel_links;
    t.pods_ = 1;
    t.capacity_bps_ = capacity_bps;
    t.latency_ = latency_from_seconds(latency_s);

    t.host_up_.resize(t.num_hosts());
    for (NodeId h = 0; h < t.num_hosts(); ++h) {
        t.host_up_[h] = t.add_link_pair(h, t.leaf_node(t.leaf_of_host(h)), 0, LinkRole::HostUp,
                                        LinkRole::HostDown);
    }
    t.leaf_up_.assign(leaves, std::vector<LinkIndex>(spines * parallel_links));
    t.spine_down_.assign(spines, std::vector<LinkIndex>(leaves * parallel_links));
    for (LeafIndex l = 0; l < leaves; ++l) {
        for (std::uint32_t s = 0; s < spines; ++s) {
            for (std::uint32_t o = 0; o < parallel_links; ++o) {
                const LinkIndex up = t.add_link_pair(t.leaf_node(l), t.spine_node(s),
                                                     static_cast<std::uint16_t>(o),
                                                     LinkRole::LeafUp, LinkRole::SpineDown);
                t.leaf_up_[l][s * parallel_links + o] = up;
                t.spine_down_[s][l * parallel_links + o] = up + 1;
            }
        }
    }
    t.finish();
    return t;
}

Topology build_fat_tree(std::uint32_t leaves, std::uint32_t spines, std::uint32_t cores,
                        std::uint32_t hosts_per_leaf, std::uint32_t parallel_links,
                        double capacity_bps, double latency_s, std::uint32_t pods) {
    require(leaves >= 1 && spines >= 1 && cores >= 1 && hosts_per_leaf >= 1 && parallel_links >= 1,
            "fat-tree counts must be at least 1");
    require(capacity_bps > 0, "link capacity must be positive");
    if (pods == 0) {
        const std::uint32_t host_ports = std::max(1u, hosts_per_leaf / parallel_links);
        const std::uint32_t spines_per_pod = std::gcd(std::gcd(spines, cores), host_ports);
        pods = spines / spines_per_pod;
    }
    require(spines % pods == 0, "spines are not evenly divisible into pods");
    require(leaves % pods == 0, "leaves are not evenly divisible into pods");
    const std::uint32_t spines_per_pod = spines / pods;
    require(cores % spines_per_pod == 0, "cores are not evenly divisible among pod spines");
    const std::uint32_t cores_per_spine = cores / spines_per_pod;
    require(spines_per_pod * parallel_links <= kMaxUplinksPerSwitch &&
                cores_per_spine * parallel_links <= kMaxUplinksPerSwitch,
            "more than 256 uplinks per switch cannot be addressed by a path id");

    Topology t;
    t.tier_ = Tier::FatTree;
    t.leaves_ = leaves;
    t.spines_ = spines;
    t.cores_ = cores;
    t.hosts_per_leaf_ = hosts_per_leaf;
    t.parallel_ = parallel_links;
    t.pods_ = pods;
    t.capacity_bps_ = capacity_bps;
    t.latency_ = latency_from_seconds(latency_s);

    const std::uint32_t leaves_per_pod = leaves / pods;
    t.host_up_.resize(t.num_hosts());
    for (NodeId h = 0; h < t.num_hosts(); ++h) {
        t.host_up_[h] = t.add_link_pair(h, t.leaf_node(t.leaf_of_host(h)), 0, LinkRole::HostUp,
                                        LinkRole::HostDown);
    }
    t.leaf_up_.assign(leaves, std::vector<LinkIndex>(spines_per_pod * parallel_links));
    t.spine_down_.assign(spines, std::vector<LinkIndex>(leaves_per_pod * parallel_links));
    t.spine_up_.assign(spines, std::vector<LinkIndex>(cores_per_spine * parallel_links));
    t.core_down_.assign(cores, std::vector<LinkIndex>(pods * parallel_links));

    for (std::uint32_t pod = 0; pod < pods; ++pod) {
        for (std::uint32_t li = 0; li < leaves_per_pod; ++li) {
            const LeafIndex leaf = pod * leaves_per_pod + li;
            for (std::uint32_t sj = 0; sj < spines_per_pod; ++sj) {
                const std::uint32_t spine = pod * spines_per_pod + sj;
                for (std::uint32_t o = 0; o < parallel_links; ++o) {
                    const LinkIndex up = t.add_link_pair(t.leaf_node(leaf), t.spine_node(spine),
                                                         static_cast<std::uint16_t>(o),
                                                         LinkRole::LeafUp, LinkRole::SpineDown);
                    t.leaf_up_[leaf][sj * parallel_links + o] = up;
                    t.spine_down_[spine][li * parallel_links + o] = up + 1;
                }
            }
        }
        for (std::uint32_t sj = 0; sj < spines_per_pod; ++sj) {
            const std::uint32_t spine = pod * spines_per_pod + sj;
            for (std::uint32_t ci = 0; ci < cores_per_spine; ++ci) {
                const std::uint32_t core = sj * cores_per_spine + ci;
                for (std::uint32_t o = 0; o < parallel_links; ++o) {
                    const LinkIndex up = t.add_link_pair(t.spine_node(spine), t.core_node(core),
                                                         static_cast<std::uint16_t>(o),
                                                         LinkRole::SpineUp, LinkRole::CoreDown);
                    t.spine_up_[spine][ci * parallel_links + o] = up;
                    t.core_down_[core][pod * parallel_links + o] = up + 1;
                }
            }
        }
    }
    t.finish();
    return t;
}

std::vector<PathId> enumerate_paths(const Topology& topo, LeafIndex src_leaf, LeafIndex dst_leaf) {
    if (src_leaf >= topo.num_leaves() || dst_leaf >= topo.num_leaves()) {
        throw TopologyError("leaf index out of range");
    }
    if (src_leaf == dst_leaf) {
        throw TopologyError("rack-local traffic does not use a path id");
    }
    auto cached = topo.paths(src_leaf, dst_leaf);
    return {cached.begin(), cached.end()};
}

}  // namespace ethereal
