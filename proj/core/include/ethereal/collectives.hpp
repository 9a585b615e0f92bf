#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ethereal/units.hpp"

namespace ethereal {

using Rank = std::uint32_t;

enum class CollectiveAlgorithm : std::uint8_t {
    AllToAll,
    RecursiveDoubling,
    Ring,
    DoubleBinaryTree,
    Custom,
};

std::string_view to_string(CollectiveAlgorithm a);
std::optional<CollectiveAlgorithm> parse_collective(std::string_view name);

/// One point-to-point transfer of a collective step. `src`/`dst` are ranks;
/// the simulator maps ranks onto hosts through the placement.
struct FlowDemand {
    Rank src = 0;
    Rank dst = 0;
    Bytes size = 0;
    std::uint32_t step = 0;
    std::uint64_t tag = 0;
};

struct StepDemands {
    std::vector<FlowDemand> flows;
};

/// Steps are ordered; a rank starts step i+1 once its own step-i sends and
/// receives have completed.
struct CollectiveSchedule {
    CollectiveAlgorithm algorithm = CollectiveAlgorithm::Custom;
    std::uint32_t num_ranks = 0;
    Bytes message_bytes = 0;
    /// Bytes added by rounding chunks up to whole MTUs.
    Bytes padded_bytes = 0;
    std::vector<StepDemands> steps;

    std::size_t flow_count() const;
    Bytes total_bytes() const;
    /// Bytes sent by one rank across all steps.
    Bytes bytes_sent_by(Rank r) const;
};

class CollectiveError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Direct reduce-scatter + all-gather: two phases of M/ranks to every peer.
CollectiveSchedule gen_all_to_all(std::uint32_t ranks, Bytes message_bytes, Bytes mtu = 4096);
/// Recursive halving reduce-scatter then recursive doubling all-gather.
CollectiveSchedule gen_recursive_doubling(std::uint32_t ranks, Bytes message_bytes,
                                          Bytes mtu = 4096);
/// Ring allreduce: 2(ranks-1) steps of M/ranks to the successor.
CollectiveSchedule gen_ring(std::uint32_t ranks, Bytes message_bytes, Bytes mtu = 4096);
/// Two complementary binary trees, each reducing and broadcasting M/2 in `chunks` pipelined pieces.
CollectiveSchedule gen_double_binary_tree(std::uint32_t ranks, Bytes message_bytes,
                                          std::uint32_t chunks = 4, Bytes mtu = 4096);

CollectiveSchedule generate(CollectiveAlgorithm algorithm, std::uint32_t ranks,
                            Bytes message_bytes, Bytes mtu = 4096);

/// Shape of one tree of the double binary tree pair.
struct BinaryTree {
    Rank root = 0;
    std::vector<std::optional<Rank>> parent;
    std::vector<std::vector<Rank>> children;
};

/// Returns the two complementary trees. For an even number of ranks every rank
/// is interior in at most one of them.
std::pair<BinaryTree, BinaryTree> double_binary_trees(std::uint32_t ranks);

/// Line-oriented text form: a `# algorithm ranks message_bytes padded_bytes`
/// header followed by one `step src dst bytes` line per flow.
void write_schedule(std::ostream& out, const CollectiveSchedule& schedule);
CollectiveSchedule read_schedule(std::istream& in);

}  // namespace ethereal
