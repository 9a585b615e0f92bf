#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ethereal/collectives.hpp"
#include "ethereal/fabric.hpp"
#include "ethereal/lb.hpp"
#include "ethereal/topology.hpp"

namespace ethereal {

/// Invalid experiment file. what() carries "<origin>:<line>:<column>: <message>" when
/// the position is known.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& origin, int line, int column, const std::string& message);
    explicit ConfigError(const std::string& message) : std::runtime_error(message) {}

    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_ = -1;
    int column_ = -1;
};

struct TopologyConfig {
    Tier tier = Tier::LeafSpine;
    std::uint32_t leaves = 4;
    std::uint32_t spines = 4;
    std::uint32_t cores = 0;
    std::uint32_t hosts_per_leaf = 4;
    std::uint32_t parallel_links = 1;
    std::uint32_t pods = 0;
    double link_bps = 100e9;
    double link_latency_s = 500e-9;
};

struct WorkloadConfig {
    CollectiveAlgorithm collective = CollectiveAlgorithm::AllToAll;
    /// 0 means one rank per host.
    std::uint32_t ranks = 0;
    std::vector<Bytes> message_sizes;
    std::uint32_t tree_chunks = 4;
    std::vector<NodeId> placement;
    /// Schedule text file for the custom collective.
    std::filesystem::path schedule_file;
};

struct OutputConfig {
    SimTime utilization_bucket = 0;
    bool flow_records = false;
};

struct ExperimentConfig {
    TopologyConfig topology;
    WorkloadConfig workload;
    std::vector<PolicySpec> policies;
    LbConfig lb;
    TransportConfig transport;
    FabricConfig fabric;
    std::vector<FailureAction> failures;
    SimLimits limits;
    std::vector<std::uint64_t> seeds{1};
    std::filesystem::path output_dir = "results";
    std::uint32_t workers = 1;
    std::optional<std::string> baseline;
    OutputConfig outputs;
    bool check_invariants = false;
};

/// Parses sizes such as 4096, "64KB", "8MB", "1.5GiB". KB/MB/GB are binary multiples.
Bytes parse_size(std::string_view text);
/// Parses "leaf0-spine1" or "leaf0-spine1#2" (parallel ordinal) into the upward LinkId.
LinkId parse_link_name(const Topology& topo, std::string_view text);

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

Topology build_topology(const TopologyConfig& cfg);

}  // namespace ethereal
