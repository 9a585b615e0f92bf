#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ethereal/collectives.hpp"
#include "ethereal/lb.hpp"
#include "ethereal/topology.hpp"
#include "ethereal/transport.hpp"
#include "ethereal/units.hpp"

namespace ethereal {

struct FabricConfig {
    Bytes switch_buffer = 64 * kMiB;
    double pfc_alpha = 1.0;
    bool pfc = true;
    SimTime switch_delay = from_ns(300);
    SimTime routing_convergence = from_ms(100);
};

enum class FailureKind : std::uint8_t { Fail, Recover };

/// Applies to both directions of the physical link between two switches.
struct FailureAction {
    SimTime time = 0;
    LinkId link;
    FailureKind action = FailureKind::Fail;
};

struct SimLimits {
    std::uint64_t max_events = 4'000'000'000ull;
    SimTime max_sim_time = from_seconds(60);
    double max_wall_seconds = 1800;
};

struct SimConfig {
    TransportConfig transport;
    FabricConfig fabric;
    LbConfig lb;
    std::vector<FailureAction> failures;
    SimLimits limits;
    /// rank -> host; empty means rank r runs on host r.
    std::vector<NodeId> placement;
    /// Verify conservation after every event and the reverse-path property on every ack.
    bool check_invariants = false;
    bool record_flows = false;
    /// Bucket width of the per-link utilization series; 0 disables it.
    SimTime utilization_bucket = 0;
};

struct FlowRecord {
    std::uint64_t flow = 0;
    std::uint32_t schedule = 0;
    std::uint32_t step = 0;
    Rank src = 0;
    Rank dst = 0;
    NodeId src_host = 0;
    NodeId dst_host = 0;
    Bytes bytes = 0;
    SimTime posted = 0;
    SimTime delivered = 0;
    /// Time the sender saw its last byte acknowledged.
    SimTime acked = 0;
    Bytes retx_bytes = 0;
    std::uint32_t subflows = 0;
    /// Every path label used by the flow's queue pairs, in order of use.
    std::vector<PathId> path_history;
};

struct UtilizationSample {
    SimTime bucket_start = 0;
    LinkIndex link = 0;
    Bytes bytes = 0;
};

struct MetricsReport {
    bool completed = false;
    SimTime cct = 0;
    double cct_s = 0;
    /// Latest completion time of each step index over all ranks.
    std::vector<SimTime> step_completion;

    std::uint32_t max_qps = 0;
    NodeId max_qps_host = 0;
    std::uint64_t qps_created = 0;

    double max_link_util = 0;
    double mean_link_util = 0;
    /// Wire bytes transmitted on every directed link.
    std::vector<Bytes> link_bytes;

    std::uint64_t drops = 0;
    Bytes drop_bytes = 0;
    std::uint64_t reorder_drops = 0;
    std::uint64_t out_of_order = 0;
    Bytes max_reorder_bytes = 0;
    Bytes retx_bytes = 0;
    std::uint64_t extra_flows = 0;
    std::uint64_t reroutes = 0;
    std::uint64_t timeouts = 0;
    std::uint64_t nacks = 0;
    std::uint64_t ecn_marks = 0;
    std::uint64_t pfc_pauses = 0;
    Bytes padded_bytes = 0;

    std::uint64_t flows = 0;
    std::uint64_t incomplete_flows = 0;
    /// Every flow's receiver got exactly its bytes, in order.
    bool delivery_ok = false;

    std::uint64_t events = 0;
    std::uint64_t trace_hash = 0;
    std::uint64_t invariant_checks = 0;

    std::vector<FlowRecord> flow_records;
    std::vector<UtilizationSample> utilization;
};

class SimulationAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Round trip of one full-size segment and its ack over the longest host-to-host route.
SimTime base_rtt(const Topology& topo, const TransportConfig& tc, const FabricConfig& fc);
/// Host link rate times base_rtt, in bytes.
Bytes bdp_bytes(const Topology& topo, const TransportConfig& tc, const FabricConfig& fc);
/// CE threshold applied at every switch egress.
Bytes ecn_threshold(const Topology& topo, const TransportConfig& tc, const FabricConfig& fc);

/// Egress marking rule: CE once the queue including the arriving packet exceeds `k`.
constexpr bool ecn_should_mark(Bytes queued, Bytes packet_wire, Bytes k) {
    return queued + packet_wire > k;
}

/// Dynamic PFC threshold of one ingress port: alpha times the free shared buffer.
/// The port pauses upstream above it and resumes at half of it.
constexpr double pfc_pause_threshold(Bytes capacity, Bytes used, double alpha) {
    return alpha * static_cast<double>(capacity > used ? capacity - used : 0);
}

/// Runs the schedules concurrently from time zero until every flow completes or the
/// event queue drains. Identical inputs give identical reports.
MetricsReport run(const Topology& topo, std::span<const CollectiveSchedule> schedules,
                  const PolicySpec& policy, const SimConfig& config, std::uint64_t seed);

inline MetricsReport run(const Topology& topo, const CollectiveSchedule& schedule,
                         const PolicySpec& policy, const SimConfig& config, std::uint64_t seed) {
    return run(topo, std::span<const CollectiveSchedule>(&schedule, 1), policy, config, seed);
}

}  // namespace ethereal
