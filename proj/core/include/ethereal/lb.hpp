#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ethereal/collectives.hpp"
#include "ethereal/random.hpp"
#include "ethereal/topology.hpp"
#include "ethereal/units.hpp"

namespace ethereal {

// ---------------------------------------------------------------------------
// Batches and assignments
// ---------------------------------------------------------------------------

struct BatchFlow {
    std::size_t id = 0;  ///< caller's handle for the parent flow
    FlowDemand demand;
    NodeId src_host = 0;
    NodeId dst_host = 0;
    LeafIndex dst_leaf = 0;
};

/// Flows intercepted at one source host, ordered by destination leaf.
struct Batch {
    NodeId source = 0;
    LeafIndex source_leaf = 0;
    std::vector<BatchFlow> flows;
};

struct Subflow {
    std::size_t parent = 0;  ///< index into Batch::flows
    PathId path;
    ExactBytes size;
};

struct Assignment {
    std::vector<Subflow> subflows;
    std::uint64_t extra_flows = 0;

    /// Exact bytes placed on each path (keyed by raw label) for one destination leaf.
    std::vector<std::pair<PathId, ExactBytes>> load_by_path(const Batch& batch,
                                                            LeafIndex dst_leaf) const;
};

/// Arithmetic of the split for `count` equal flows of `flow_size` over `paths` paths.
struct GroupSplit {
    std::uint64_t whole_per_path = 0;
    std::uint64_t remainder = 0;
    std::uint64_t gcd = 0;
    std::uint64_t pieces_per_remainder = 1;
    std::uint64_t pieces_per_path = 0;
    std::uint64_t extra_flows = 0;
    ExactBytes piece_size;
    ExactBytes per_path_load;
};

GroupSplit plan_group(std::uint64_t count, ExactBytes flow_size, std::uint64_t paths);

/// Places whole flows round-robin over `ordered_paths`, then splits the remainder
/// flows into s/gcd(r, s) equal pieces, r/gcd(r, s) per path.
void assign_group(std::span<const std::size_t> parents, ExactBytes flow_size,
                  std::span<const PathId> ordered_paths, Assignment& out);

/// Integer byte sizes for `pieces` fragments of `total`; sums to `total`.
std::vector<Bytes> split_bytes(Bytes total, std::uint64_t pieces);

// ---------------------------------------------------------------------------
// Per-host path state
// ---------------------------------------------------------------------------

enum class PathStatus : std::uint8_t { Good, Bad };

class AllPathsDown : public std::runtime_error {
public:
    AllPathsDown(LeafIndex dst_leaf, SimTime retry_at);
    LeafIndex dst_leaf() const { return dst_leaf_; }
    /// Earliest time a bad path toward the leaf reverts to good.
    SimTime retry_at() const { return retry_at_; }

private:
    LeafIndex dst_leaf_;
    SimTime retry_at_;
};

/// Good/bad status and outstanding bytes per (destination leaf, path) as seen by one host.
class PathState {
public:
    PathState() = default;
    PathState(const Topology& topo, LeafIndex source_leaf, SimTime reset_after);
    /// Standalone state with the same `paths` toward every one of `leaves` leaves.
    PathState(std::uint32_t leaves, std::vector<PathId> paths, SimTime reset_after);

    SimTime reset_after() const { return reset_after_; }
    std::span<const PathId> all_paths(LeafIndex dst_leaf) const;
    std::vector<PathId> good_paths(LeafIndex dst_leaf, SimTime now) const;
    PathStatus status(LeafIndex dst_leaf, PathId p, SimTime now) const;
    std::optional<SimTime> bad_since(LeafIndex dst_leaf, PathId p, SimTime now) const;

    /// Excludes `p` until now + reset_after. Re-marking a bad path keeps its original timestamp.
    void mark_bad(LeafIndex dst_leaf, PathId p, SimTime now);

    Bytes outstanding(LeafIndex dst_leaf, PathId p) const;
    void add_outstanding(LeafIndex dst_leaf, PathId p, Bytes bytes);
    void release_outstanding(LeafIndex dst_leaf, PathId p, Bytes bytes);

    /// Uniform draw among good paths other than `exclude`; falls back to any other path,
    /// then to `exclude` itself when it is the only path.
    PathId pick_reroute(LeafIndex dst_leaf, PathId exclude, SimTime now, Rng& rng) const;

private:
    struct Entry {
        SimTime bad_since = kTimeNever;
        Bytes outstanding = 0;
    };
    struct Leaf {
        std::vector<PathId> paths;
        std::vector<Entry> entries;
    };
    std::size_t index_of(const Leaf& leaf, PathId p) const;
    bool good(const Entry& e, SimTime now) const;

    std::vector<Leaf> leaves_;
    SimTime reset_after_ = 0;
};

/// Splits and assigns every (destination leaf, size) group of the batch over the
/// currently good paths. Paths are visited by ascending outstanding bytes, ties
/// broken by a per-source rotation. Throws AllPathsDown when a group has no good path.
Assignment select_path(const Batch& batch, const PathState& state, SimTime now,
                       std::uint32_t rotation = 0);

// ---------------------------------------------------------------------------
// Flow interceptor
// ---------------------------------------------------------------------------

struct InterceptorConfig {
    SimTime window = from_us(10);
    double max_jitter_s = 5e-6;
    /// Close the window as soon as the library finishes posting a step's sends.
    bool flush_on_post = true;
};

struct Interception {
    std::vector<BatchFlow> immediate;  ///< rack-local flows, released without a path id
    Batch batch;                       ///< remaining flows sorted by destination leaf
};

/// Separates rack-local flows and orders the rest by destination leaf (stable).
Interception flow_arrival(NodeId source, LeafIndex source_leaf, std::vector<BatchFlow> flows);

/// Uniform start delay in [0, max_jitter_s).
double draw_start_jitter(Rng& rng, const InterceptorConfig& cfg);
/// Uniform insertion slot in [0, list_size].
std::size_t draw_queue_position(Rng& rng, std::size_t list_size);

// ---------------------------------------------------------------------------
// Baseline path choices
// ---------------------------------------------------------------------------

/// Stateless 5-tuple hash: same inputs, same path.
PathId ecmp_path(std::span<const PathId> paths, NodeId src, NodeId dst, std::uint64_t flow_tag,
                 std::uint32_t subflow, std::uint64_t seed);
PathId spray_path(std::span<const PathId> paths, Rng& rng);
/// Equal split of every flow into x subflows.
std::vector<Bytes> mp_rdma_split(Bytes flow_bytes, std::uint32_t x);

/// Entropy recycling for one flow: sprays until the first ack, then reuses entropies
/// whose acks came back unmarked; a marked ack evicts its entropy.
class RepsFlowState {
public:
    PathId next_path(std::span<const PathId> paths, Rng& rng);
    /// Returns true when the feedback evicted an entropy (a re-route).
    bool on_feedback(PathId entropy, bool ce, std::size_t cache_limit);
    void forget(PathId entropy);

    bool exploring() const { return !acked_; }
    std::size_t cached() const { return cache_.size(); }

private:
    std::deque<PathId> cache_;
    bool acked_ = false;
};

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

enum class PolicyKind : std::uint8_t { Ethereal, Ecmp, Spray, Reps, MpRdma };

struct PolicySpec {
    PolicyKind kind = PolicyKind::Ethereal;
    std::uint32_t splits = 1;  ///< x for mprdma:<x>

    std::string name() const;
    bool multipath() const { return kind == PolicyKind::Spray || kind == PolicyKind::Reps; }
    bool source_routed() const { return kind == PolicyKind::Ethereal; }
    auto operator<=>(const PolicySpec&) const = default;
};

/// Parses `ethereal | ecmp | spray | reps | mprdma:<x>`.
PolicySpec parse_policy(std::string_view text);

struct LbConfig {
    InterceptorConfig interceptor;
    SimTime bad_path_reset = from_ms(250);
    std::uint64_t ecmp_seed = 0;
    /// Fixed REPS cache depth; 0 ties it to the flow's in-flight packet credit.
    std::size_t reps_cache_limit = 0;
};

struct QpLaunch {
    std::size_t parent = 0;  ///< index into Batch::flows
    Bytes bytes = 0;
    PathId path;
    SimTime delay = 0;
    bool random_position = false;
};

struct PlacedBatch {
    std::vector<QpLaunch> launches;
    std::uint64_t extra_flows = 0;
};

/// View of a queue pair handed to the policy by the transport.
struct QpRef {
    std::uint64_t qp = 0;
    LeafIndex dst_leaf = 0;
    bool rack_local = false;
    PathId path;
    Bytes remaining = 0;  ///< bytes not yet acknowledged
    std::size_t credit_packets = 1;
};

enum class RerouteCause : std::uint8_t { Nack, Timeout };

/// One instance per host; instances never share state.
class LoadBalancer {
public:
    virtual ~LoadBalancer() = default;

    const PolicySpec& spec() const { return spec_; }
    bool multipath() const { return spec_.multipath(); }
    bool source_routed() const { return spec_.source_routed(); }
    virtual SimTime batch_window() const { return 0; }

    /// Turns intercepted flows into queue pairs. May throw AllPathsDown.
    virtual PlacedBatch place(const Batch& batch, SimTime now) = 0;
    /// Label for the next data packet of `qp`.
    virtual PathId packet_path(const QpRef& qp) { return qp.path; }
    virtual void on_ack(const QpRef& /*qp*/, PathId /*entropy*/, bool /*ce*/) {}
    virtual void on_progress(const QpRef& /*qp*/, Bytes /*acked*/) {}
    virtual void on_complete(const QpRef& /*qp*/) {}
    /// Path for a queue pair recovering from loss; returning qp.path means no re-route.
    virtual PathId reroute(const QpRef& qp, SimTime /*now*/, RerouteCause /*cause*/) {
        return qp.path;
    }

    std::uint64_t reroutes() const { return reroutes_; }

protected:
    LoadBalancer(PolicySpec spec, const Topology& topo, NodeId host)
        : spec_(spec), topo_(&topo), host_(host), leaf_(topo.leaf_of_host(host)) {}

    std::span<const PathId> paths_to(LeafIndex dst_leaf) const {
        return topo_->paths(leaf_, dst_leaf);
    }

    PolicySpec spec_;
    const Topology* topo_;
    NodeId host_;
    LeafIndex leaf_;
    std::uint64_t reroutes_ = 0;
};

class EtherealBalancer final : public LoadBalancer {
public:
    EtherealBalancer(const Topology& topo, NodeId host, const LbConfig& cfg, Rng rng);

    SimTime batch_window() const override { return cfg_.interceptor.window; }
    PlacedBatch place(const Batch& batch, SimTime now) override;
    void on_progress(const QpRef& qp, Bytes acked) override;
    PathId reroute(const QpRef& qp, SimTime now, RerouteCause cause) override;

    const PathState& path_state() const { return state_; }
    std::uint32_t rotation() const { return rotation_; }

private:
    LbConfig cfg_;
    Rng rng_;
    PathState state_;
    std::uint32_t rotation_ = 0;
};

class EcmpBalancer final : public LoadBalancer {
public:
    EcmpBalancer(PolicySpec spec, const Topology& topo, NodeId host, const LbConfig& cfg);
    PlacedBatch place(const Batch& batch, SimTime now) override;

private:
    LbConfig cfg_;
};

class SprayBalancer final : public LoadBalancer {
public:
    SprayBalancer(const Topology& topo, NodeId host, Rng rng);
    PlacedBatch place(const Batch& batch, SimTime now) override;
    PathId packet_path(const QpRef& qp) override;

private:
    Rng rng_;
};

class RepsBalancer final : public LoadBalancer {
public:
    RepsBalancer(const Topology& topo, NodeId host, const LbConfig& cfg, Rng rng);
    PlacedBatch place(const Batch& batch, SimTime now) override;
    PathId packet_path(const QpRef& qp) override;
    void on_ack(const QpRef& qp, PathId entropy, bool ce) override;
    void on_complete(const QpRef& qp) override;
    PathId reroute(const QpRef& qp, SimTime now, RerouteCause cause) override;

private:
    LbConfig cfg_;
    Rng rng_;
    std::unordered_map<std::uint64_t, RepsFlowState> flows_;
};

std::unique_ptr<LoadBalancer> make_load_balancer(const PolicySpec& spec, const Topology& topo,
                                                 NodeId host, const LbConfig& cfg,
                                                 std::uint64_t seed);

}  // namespace ethereal
