#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "ethereal/topology.hpp"

using namespace ethereal;

namespace {

// Walks a label hop by hop and returns the links plus the label seen by the receiver.
std::pair<std::vector<LinkIndex>, PathId> walk(const Topology& t, NodeId src, NodeId dst,
                                               PathId p) {
    std::vector<LinkIndex> links{t.host_uplink(src)};
    NodeId at = t.link(links.back()).id.to;
    while (at != dst) {
        const Hop h = t.resolve_hop(at, p, dst);
        links.push_back(h.link);
        p = h.next;
        at = t.link(h.link).id.to;
    }
    return {links, p};
}

void expect_reverse_paths(const Topology& t) {
    const std::uint32_t hpl = t.hosts_per_leaf();
    for (LeafIndex a = 0; a < t.num_leaves(); ++a) {
        for (LeafIndex b = 0; b < t.num_leaves(); ++b) {
            if (a == b) continue;
            const NodeId src = a * hpl;
            const NodeId dst = b * hpl + (hpl - 1);
            for (PathId p : t.paths(a, b)) {
                auto [fwd, received] = walk(t, src, dst, p);
                auto [back, echoed] = walk(t, dst, src, received.swapped());
                ASSERT_EQ(fwd.size(), back.size());
                for (std::size_t i = 0; i < fwd.size(); ++i) {
                    EXPECT_EQ(t.link(fwd[i]).reverse, back[back.size() - 1 - i])
                        << "leaf" << a << " -> leaf" << b << " label " << p.raw();
                }
                // The echoed label of the ack maps back to the original entropy.
                EXPECT_EQ(echoed.swapped(), p);
            }
        }
    }
}

void expect_edge_disjoint(const Topology& t, LeafIndex a, LeafIndex b) {
    std::set<LinkIndex> seen;
    const auto paths = t.paths(a, b);
    for (PathId p : paths) {
        const auto links = t.trace(a * t.hosts_per_leaf(), b * t.hosts_per_leaf(), p);
        // Skip the host links at both ends.
        for (std::size_t i = 1; i + 1 < links.size(); ++i) {
            EXPECT_TRUE(seen.insert(links[i]).second) << "shared link on label " << p.raw();
        }
    }
    // Disjoint routes saturate the source leaf's uplinks, so none can be added.
    EXPECT_EQ(paths.size(), t.uplinks_per_leaf());
}

}  // namespace

TEST(BuildLeafSpine, PaperScale) {
    const auto t = build_leaf_spine(16, 16, 16, 400e9, 500e-9);
    EXPECT_EQ(t.num_hosts(), 256u);
    EXPECT_EQ(t.uplinks_per_leaf() * t.num_leaves(), 256u);
}

TEST(BuildLeafSpine, Minimal) {
    const auto t = build_leaf_spine(1, 1, 2, 400e9, 500e-9);
    EXPECT_EQ(t.num_hosts(), 2u);
    EXPECT_EQ(t.uplinks_per_leaf() * t.num_leaves(), 1u);
}

TEST(BuildLeafSpine, DeskScale) {
    const auto t = build_leaf_spine(4, 4, 4, 100e9, 500e-9);
    EXPECT_EQ(t.num_hosts(), 16u);
    EXPECT_EQ(t.leaf_spine_links().size(), 32u);  // 16 up + 16 down
    EXPECT_EQ(t.link_latency(), from_ns(500));
}

TEST(BuildLeafSpine, RejectsZeroCounts) {
    EXPECT_THROW(build_leaf_spine(0, 4, 4, 100e9, 500e-9), TopologyError);
    EXPECT_THROW(build_leaf_spine(4, 0, 4, 100e9, 500e-9), TopologyError);
    EXPECT_THROW(build_leaf_spine(4, 4, 0, 100e9, 500e-9), TopologyError);
}

TEST(BuildLeafSpine, RejectsMoreThan256Uplinks) {
    EXPECT_THROW(build_leaf_spine(2, 129, 1, 100e9, 500e-9, 2), TopologyError);
    EXPECT_NO_THROW(build_leaf_spine(2, 128, 1, 100e9, 500e-9, 2));
}

TEST(BuildFatTree, PaperScale) {
    const auto t = build_fat_tree(32, 32, 16, 16, 4, 400e9, 500e-9);
    EXPECT_EQ(t.num_hosts(), 512u);
    EXPECT_EQ(t.tier(), Tier::FatTree);
    EXPECT_EQ(t.uplinks_per_leaf(), t.spines_per_pod() * 4);
}

TEST(BuildFatTree, SmallestInstance) {
    // Two leaves of two hosts each; a "8 hosts" count would need four hosts per leaf.
    const auto t = build_fat_tree(2, 2, 1, 2, 1, 400e9, 500e-9);
    EXPECT_EQ(t.num_hosts(), 4u);
    EXPECT_EQ(t.num_pods(), 2u);
    EXPECT_EQ(t.paths(0, 1).size(), 1u);
}

TEST(BuildFatTree, DeskScale) {
    const auto t = build_fat_tree(8, 8, 4, 8, 2, 100e9, 500e-9);
    EXPECT_EQ(t.num_hosts(), 64u);
    EXPECT_EQ(t.uplinks_per_leaf(), 2 * t.spines_per_pod());
}

TEST(BuildFatTree, RejectsInconsistentPods) {
    EXPECT_THROW(build_fat_tree(8, 8, 4, 8, 1, 100e9, 500e-9, 3), TopologyError);
    EXPECT_THROW(build_fat_tree(8, 8, 0, 8, 1, 100e9, 500e-9), TopologyError);
}

TEST(EnumeratePaths, LeafSpineSixteenSpines) {
    const auto t = build_leaf_spine(2, 16, 1, 100e9, 500e-9);
    const auto paths = enumerate_paths(t, 0, 1);
    ASSERT_EQ(paths.size(), 16u);
    std::set<std::uint8_t> firsts;
    for (PathId p : paths) {
        EXPECT_EQ(p.second(), 0);
        firsts.insert(p.first());
    }
    EXPECT_EQ(firsts.size(), 16u);
}

TEST(EnumeratePaths, SingleSpine) {
    const auto t = build_leaf_spine(3, 1, 1, 100e9, 500e-9);
    EXPECT_EQ(enumerate_paths(t, 0, 2).size(), 1u);
}

TEST(EnumeratePaths, FatTreeInterPodSixteen) {
    // 4 spines per pod with 4 parallel links gives 16 uplinks per leaf.
    const auto t = build_fat_tree(32, 32, 16, 16, 4, 400e9, 500e-9);
    ASSERT_EQ(t.spines_per_pod(), 4u);
    ASSERT_EQ(t.cores_per_spine(), 4u);
    const LeafIndex far = t.num_leaves() - 1;
    ASSERT_NE(t.pod_of_leaf(0), t.pod_of_leaf(far));
    EXPECT_EQ(enumerate_paths(t, 0, far).size(), 16u);
}

TEST(EnumeratePaths, SameLeafRejected) {
    const auto t = build_leaf_spine(2, 2, 2, 100e9, 500e-9);
    EXPECT_THROW(enumerate_paths(t, 1, 1), TopologyError);
}

TEST(EnumeratePaths, CountEqualsMinCut) {
    expect_edge_disjoint(build_leaf_spine(4, 4, 2, 100e9, 500e-9), 0, 3);
    expect_edge_disjoint(build_leaf_spine(3, 2, 1, 100e9, 500e-9, 3), 2, 0);
    const auto ft = build_fat_tree(8, 8, 16, 8, 2, 100e9, 500e-9);
    expect_edge_disjoint(ft, 0, 1);
    expect_edge_disjoint(ft, 0, 7);
    const auto ft2 = build_fat_tree(8, 8, 4, 8, 2, 100e9, 500e-9);
    expect_edge_disjoint(ft2, 1, 6);
}

TEST(SwapPathId, Examples) {
    EXPECT_EQ(swap_path_id(PathId(0x0307)).raw(), 0x0703);
    EXPECT_EQ(swap_path_id(PathId(0x0000)).raw(), 0x0000);
    EXPECT_EQ(swap_path_id(PathId(0x0A0A)).raw(), 0x0A0A);
}

TEST(SwapPathId, Involution) {
    for (std::uint32_t raw = 0; raw <= 0xffff; ++raw) {
        const PathId p(static_cast<std::uint16_t>(raw));
        ASSERT_EQ(swap_path_id(swap_path_id(p)), p);
    }
}

TEST(ResolveHop, UplinkFromLeaf) {
    const auto t = build_leaf_spine(2, 16, 1, 100e9, 500e-9);
    const NodeId leaf0 = t.leaf_node(0);
    const NodeId dst = 1;  // host on leaf1
    const Hop h = resolve_hop(t, leaf0, PathId(0x0500), dst);
    EXPECT_EQ(t.link(h.link).id.from, leaf0);
    EXPECT_EQ(t.link(h.link).id.to, t.spine_node(5));
    EXPECT_EQ(h.next.raw(), 0x0005);

    const Hop zero = resolve_hop(t, leaf0, PathId(0x0000), dst);
    EXPECT_EQ(t.link(zero.link).id.to, t.spine_node(0));
}

TEST(ResolveHop, OutOfRangeLabel) {
    const auto t = build_leaf_spine(2, 16, 1, 100e9, 500e-9);
    EXPECT_THROW(resolve_hop(t, t.leaf_node(0), PathId(0x2000), 1), InvalidRoute);
}

TEST(ResolveHop, DownHopsSwapAndFollowDestination) {
    const auto t = build_leaf_spine(3, 4, 2, 100e9, 500e-9);
    const NodeId dst = 5;  // leaf2
    const Hop h = resolve_hop(t, t.spine_node(1), PathId(0x0001), dst);
    EXPECT_EQ(t.link(h.link).id.to, t.leaf_node(2));
    EXPECT_EQ(h.next.raw(), 0x0100);
    const Hop last = resolve_hop(t, t.leaf_node(2), h.next, dst);
    EXPECT_EQ(t.link(last.link).id.to, dst);
}

TEST(ResolveHop, Deterministic) {
    const auto t = build_fat_tree(8, 8, 4, 8, 2, 100e9, 500e-9);
    for (PathId p : t.paths(0, 7)) {
        EXPECT_EQ(t.trace(0, 63, p), t.trace(0, 63, p));
    }
}

TEST(ReversePath, LeafSpine) {
    expect_reverse_paths(build_leaf_spine(4, 4, 2, 100e9, 500e-9));
    expect_reverse_paths(build_leaf_spine(3, 2, 2, 100e9, 500e-9, 3));
}

TEST(ReversePath, FatTree) {
    expect_reverse_paths(build_fat_tree(8, 8, 4, 2, 2, 100e9, 500e-9));
    expect_reverse_paths(build_fat_tree(8, 8, 16, 2, 2, 100e9, 500e-9));
}

TEST(Topology, SymmetricLinks) {
    const auto t = build_fat_tree(8, 8, 4, 8, 2, 100e9, 500e-9);
    for (LinkIndex i = 0; i < t.links().size(); ++i) {
        const Link& l = t.link(i);
        const Link& r = t.link(l.reverse);
        EXPECT_EQ(r.reverse, i);
        EXPECT_EQ(r.id.from, l.id.to);
        EXPECT_EQ(r.id.to, l.id.from);
        EXPECT_EQ(r.capacity_bps, l.capacity_bps);
    }
}

TEST(Topology, NodeNamesRoundTrip) {
    const auto t = build_fat_tree(4, 4, 2, 2, 1, 100e9, 500e-9);
    for (NodeId n = 0; n < t.num_nodes(); ++n) {
        EXPECT_EQ(t.parse_node(t.node_name(n)), n);
    }
    EXPECT_FALSE(t.parse_node("router3").has_value());
}
