#include "ethereal/lb.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <string>

namespace ethereal {

// ---------------------------------------------------------------------------
// Split arithmetic
// ---------------------------------------------------------------------------

GroupSplit plan_group(std::uint64_t count, ExactBytes flow_size, std::uint64_t paths) {
    if (paths == 0) throw std::invalid_argument("plan_group needs at least one path");
    GroupSplit g;
    g.whole_per_path = count / paths;
    g.remainder = count % paths;
    g.gcd = std::gcd(g.remainder, paths);
    if (g.remainder != 0) {
        g.pieces_per_remainder = paths / g.gcd;
        g.extra_flows = g.remainder * (paths - g.gcd) / g.gcd;
        g.piece_size = flow_size * ExactBytes(static_cast<std::int64_t>(g.gcd)) /
                       ExactBytes(static_cast<std::int64_t>(paths));
        g.pieces_per_path = g.remainder / g.gcd;
    } else {
        g.piece_size = flow_size;
    }
    g.per_path_load = flow_size * ExactBytes(static_cast<std::int64_t>(count)) /
                      ExactBytes(static_cast<std::int64_t>(paths));
    return g;
}

void assign_group(std::span<const std::size_t> parents, ExactBytes flow_size,
                  std::span<const PathId> ordered_paths, Assignment& out) {
    if (parents.empty()) return;
    const std::uint64_t s = ordered_paths.size();
    const GroupSplit plan = plan_group(parents.size(), flow_size, s);
    const std::size_t whole = static_cast<std::size_t>(plan.whole_per_path * s);
    for (std::size_t k = 0; k < whole; ++k) {
        out.subflows.push_back(Subflow{parents[k], ordered_paths[k % s], flow_size});
    }
    std::size_t slot = 0;
    for (std::size_t k = whole; k < parents.size(); ++k) {
        for (std::uint64_t piece = 0; piece < plan.pieces_per_remainder; ++piece) {
            out.subflows.push_back(Subflow{parents[k], ordered_paths[slot % s], plan.piece_size});
            ++slot;
        }
    }
    out.extra_flows += plan.extra_flows;
}

std::vector<Bytes> split_bytes(Bytes total, std::uint64_t pieces) {
    if (pieces == 0) throw std::invalid_argument("split_bytes needs at least one piece");
    std::vector<Bytes> out(pieces, total / pieces);
    const Bytes extra = total % pieces;
    for (Bytes i = 0; i < extra; ++i) ++out[i];
    return out;
}

std::vector<std::pair<PathId, ExactBytes>> Assignment::load_by_path(const Batch& batch,
                                                                    LeafIndex dst_leaf) const {
    std::map<PathId, ExactBytes> loads;
    for (const auto& sf : subflows) {
        if (batch.flows.at(sf.parent).dst_leaf == dst_leaf) loads[sf.path] += sf.size;
    }
    return {loads.begin(), loads.end()};
}

// ---------------------------------------------------------------------------
// PathState
// ---------------------------------------------------------------------------

AllPathsDown::AllPathsDown(LeafIndex dst_leaf, SimTime retry_at)
    : std::runtime_error("all paths toward leaf " + std::to_string(dst_leaf) + " are marked bad"),
      dst_leaf_(dst_leaf),
      retry_at_(retry_at) {}

PathState::PathState(const Topology& topo, LeafIndex source_leaf, SimTime reset_after)
    : reset_after_(reset_after) {
    leaves_.resize(topo.num_leaves());
    for (LeafIndex d = 0; d < topo.num_leaves(); ++d) {
        if (d == source_leaf) continue;
        auto p = topo.paths(source_leaf, d);
        leaves_[d].paths.assign(p.begin(), p.end());
        leaves_[d].entries.resize(p.size());
    }
}

PathState::PathState(std::uint32_t leaves, std::vector<PathId> paths, SimTime reset_after)
    : reset_after_(reset_after) {
    leaves_.resize(leaves);
    for (auto& l : leaves_) {
        l.paths = paths;
        l.entries.resize(paths.size());
    }
}

std::size_t PathState::index_of(const Leaf& leaf, PathId p) const {
    auto it = std::find(leaf.paths.begin(), leaf.paths.end(), p);
    if (it == leaf.paths.end()) {
        throw std::out_of_range("path " + std::to_string(p.raw()) + " is not known to this host");
    }
    return static_cast<std::size_t>(it - leaf.paths.begin());
}

bool PathState::good(const Entry& e, SimTime now) const {
    return e.bad_since == kTimeNever || now - e.bad_since >= reset_after_;
}

std::span<const PathId> PathState::all_paths(LeafIndex dst_leaf) const {
    return leaves_.at(dst_leaf).paths;
}

std::vector<PathId> PathState::good_paths(LeafIndex dst_leaf, SimTime now) const {
    const Leaf& l = leaves_.at(dst_leaf);
    std::vector<PathId> out;
    for (std::size_t i = 0; i < l.paths.size(); ++i) {
        if (good(l.entries[i], now)) out.push_back(l.paths[i]);
    }
    return out;
}

PathStatus PathState::status(LeafIndex dst_leaf, PathId p, SimTime now) const {
    const Leaf& l = leaves_.at(dst_leaf);
    return good(l.entries[index_of(l, p)], now) ? PathStatus::Good : PathStatus::Bad;
}

std::optional<SimTime> PathState::bad_since(LeafIndex dst_leaf, PathId p, SimTime now) const {
    const Leaf& l = leaves_.at(dst_leaf);
    const Entry& e = l.entries[index_of(l, p)];
    if (good(e, now)) return std::nullopt;
    return e.bad_since;
}

void PathState::mark_bad(LeafIndex dst_leaf, PathId p, SimTime now) {
    Leaf& l = leaves_.at(dst_leaf);
    Entry& e = l.entries[index_of(l, p)];
    if (!good(e, now)) return;
    e.bad_since = now;
}

Bytes PathState::outstanding(LeafIndex dst_leaf, PathId p) const {
    const Leaf& l = leaves_.at(dst_leaf);
    return l.entries[index_of(l, p)].outstanding;
}

void PathState::add_outstanding(LeafIndex dst_leaf, PathId p, Bytes bytes) {
    Leaf& l = leaves_.at(dst_leaf);
    l.entries[index_of(l, p)].outstanding += bytes;
}

void PathState::release_outstanding(LeafIndex dst_leaf, PathId p, Bytes bytes) {
    Leaf& l = leaves_.at(dst_leaf);
    Bytes& o = l.entries[index_of(l, p)].outstanding;
    o -= std::min(o, bytes);
}

PathId PathState::pick_reroute(LeafIndex dst_leaf, PathId exclude, SimTime now, Rng& rng) const {
    const Leaf& l = leaves_.at(dst_leaf);
    std::vector<PathId> pool;
    for (std::size_t i = 0; i < l.paths.size(); ++i) {
        if (l.paths[i] != exclude && good(l.entries[i], now)) pool.push_back(l.paths[i]);
    }
    if (pool.empty()) {
        for (auto p : l.paths) {
            if (p != exclude) pool.push_back(p);
        }
    }
    if (pool.empty()) return exclude;
    return pool[uniform_index(rng, pool.size())];
}

// ---------------------------------------------------------------------------
// select_path
// ---------------------------------------------------------------------------

Assignment select_path(const Batch& batch, const PathState& state, SimTime now,
                       std::uint32_t rotation) {
    Assignment out;
    std::map<std::pair<LeafIndex, Bytes>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < batch.flows.size(); ++i) {
        const auto& f = batch.flows[i];
        if (f.dst_leaf == batch.source_leaf) {
            out.subflows.push_back(
                Subflow{i, PathId{}, ExactBytes(static_cast<std::int64_t>(f.demand.size))});
            continue;
        }
        groups[{f.dst_leaf, f.demand.size}].push_back(i);
    }

    // Bytes placed by earlier sub-groups of this batch count toward the ordering key.
    std::map<std::pair<LeafIndex, PathId>, ExactBytes> placed;
    for (const auto& [key, parents] : groups) {
        const LeafIndex leaf = key.first;
        const ExactBytes size(static_cast<std::int64_t>(key.second));
        std::vector<PathId> good = state.good_paths(leaf, now);
        if (good.empty()) {
            SimTime retry = kTimeNever;
            for (auto p : state.all_paths(leaf)) {
                if (auto since = state.bad_since(leaf, p, now)) {
                    retry = std::min(retry, *since + state.reset_after());
                }
            }
            throw AllPathsDown(leaf, retry);
        }
        const auto all = state.all_paths(leaf);
        const std::size_t m = all.size();
        auto rank_of = [&](PathId p) {
            const auto pos = static_cast<std::size_t>(std::find(all.begin(), all.end(), p) -
                                                      all.begin());
            return (pos + m - rotation % m) % m;
        };
        auto load_of = [&](PathId p) {
            auto it = placed.find({leaf, p});
            const ExactBytes extra = it == placed.end() ? ExactBytes(0) : it->second;
            return ExactBytes(static_cast<std::int64_t>(state.outstanding(leaf, p))) + extra;
        };
        std::stable_sort(good.begin(), good.end(), [&](PathId a, PathId b) {
            const ExactBytes la = load_of(a), lb = load_of(b);
            if (la != lb) return la < lb;
            return rank_of(a) < rank_of(b);
        });
        const std::size_t first = out.subflows.size();
        assign_group(parents, size, good, out);
        for (std::size_t k = first; k < out.subflows.size(); ++k) {
            placed[{leaf, out.subflows[k].path}] += out.subflows[k].size;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Interceptor
// ---------------------------------------------------------------------------

Interception flow_arrival(NodeId source, LeafIndex source_leaf, std::vector<BatchFlow> flows) {
    Interception out;
    out.batch.source = source;
    out.batch.source_leaf = source_leaf;
    for (auto& f : flows) {
        if (f.dst_leaf == source_leaf) {
            out.immediate.push_back(std::move(f));
        } else {
            out.batch.flows.push_back(std::move(f));
        }
    }
    std::stable_sort(out.batch.flows.begin(), out.batch.flows.end(),
                     [](const BatchFlow& a, const BatchFlow& b) { return a.dst_leaf < b.dst_leaf; });
    return out;
}

double draw_start_jitter(Rng& rng, const InterceptorConfig& cfg) {
    if (cfg.max_jitter_s <= 0) return 0.0;
    return uniform_real(rng, 0.0, cfg.max_jitter_s);
}

std::size_t draw_queue_position(Rng& rng, std::size_t list_size) {
    return uniform_index(rng, list_size + 1);
}

// ---------------------------------------------------------------------------
// Baseline path choices
// ---------------------------------------------------------------------------

PathId ecmp_path(std::span<const PathId> paths, NodeId src, NodeId dst, std::uint64_t flow_tag,
                 std::uint32_t subflow, std::uint64_t seed) {
    if (paths.empty()) return PathId{};
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ ((static_cast<std::uint64_t>(src) << 32) | dst));
    h = mix64(h ^ flow_tag);
    h = mix64(h ^ subflow);
    return paths[h % paths.size()];
}

PathId spray_path(std::span<const PathId> paths, Rng& rng) {
    if (paths.empty()) return PathId{};
    return paths[uniform_index(rng, paths.size())];
}

std::vector<Bytes> mp_rdma_split(Bytes flow_bytes, std::uint32_t x) {
    if (x == 0) throw std::invalid_argument("mprdma split factor must be at least 1");
    auto parts = split_bytes(flow_bytes, x);
    std::erase(parts, Bytes{0});
    return parts;
}

PathId RepsFlowState::next_path(std::span<const PathId> paths, Rng& rng) {
    if (!acked_ || cache_.empty()) return spray_path(paths, rng);
    const PathId p = cache_.front();
    cache_.pop_front();
    return p;
}

bool RepsFlowState::on_feedback(PathId entropy, bool ce, std::size_t cache_limit) {
    acked_ = true;
    if (ce) {
        forget(entropy);
        return true;
    }
    if (cache_.size() < std::max<std::size_t>(cache_limit, 1)) cache_.push_back(entropy);
    return false;
}

void RepsFlowState::forget(PathId entropy) { std::erase(cache_, entropy); }

// ---------------------------------------------------------------------------
// Policy parsing
// ---------------------------------------------------------------------------

std::string PolicySpec::name() const {
    switch (kind) {
        case PolicyKind::Ethereal: return "ethereal";
        case PolicyKind::Ecmp: return "ecmp";
        case PolicyKind::Spray: return "spray";
        case PolicyKind::Reps: return "reps";
        case PolicyKind::MpRdma: return "mprdma:" + std::to_string(splits);
    }
    return "unknown";
}

PolicySpec parse_policy(std::string_view text) {
    if (text == "ethereal") return {PolicyKind::Ethereal, 1};
    if (text == "ecmp") return {PolicyKind::Ecmp, 1};
    if (text == "spray") return {PolicyKind::Spray, 1};
    if (text == "reps") return {PolicyKind::Reps, 1};
    constexpr std::string_view prefix = "mprdma:";
    if (text.starts_with(prefix)) {
        auto digits = text.substr(prefix.size());
        std::uint32_t x = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), x);
        if (ec == std::errc{} && ptr == digits.data() + digits.size() && x >= 1) {
            return {PolicyKind::MpRdma, x};
        }
    }
    throw std::invalid_argument("unknown policy '" + std::string(text) +
                                "' (expected ethereal, ecmp, spray, reps or mprdma:<x>)");
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

EtherealBalancer::EtherealBalancer(const Topology& topo, NodeId host, const LbConfig& cfg, Rng rng)
    : LoadBalancer({PolicyKind::Ethereal, 1}, topo, host),
      cfg_(cfg),
      rng_(std::move(rng)),
      state_(topo, topo.leaf_of_host(host), cfg.bad_path_reset) {
    rotation_ = static_cast<std::uint32_t>(uniform_index(rng_, std::max(1u, topo.uplinks_per_leaf())));
}

PlacedBatch EtherealBalancer::place(const Batch& batch, SimTime now) {
    const Assignment a = select_path(batch, state_, now, rotation_);
    PlacedBatch out;
    out.extra_flows = a.extra_flows;

    std::vector<std::uint64_t> pieces(batch.flows.size(), 0);
    for (const auto& sf : a.subflows) ++pieces[sf.parent];
    std::vector<std::vector<Bytes>> sizes(batch.flows.size());
    std::vector<std::size_t> cursor(batch.flows.size(), 0);
    std::vector<SimTime> delay(batch.flows.size(), 0);
    for (std::size_t i = 0; i < batch.flows.size(); ++i) {
        if (pieces[i] > 0) sizes[i] = split_bytes(batch.flows[i].demand.size, pieces[i]);
        if (batch.flows[i].dst_leaf != leaf_) delay[i] = from_seconds(draw_start_jitter(rng_, cfg_.interceptor));
    }
    for (const auto& sf : a.subflows) {
        const auto& f = batch.flows[sf.parent];
        QpLaunch l;
        l.parent = sf.parent;
        l.bytes = sizes[sf.parent][cursor[sf.parent]++];
        l.path = sf.path;
        l.random_position = true;
        if (f.dst_leaf != leaf_) {
            l.delay = delay[sf.parent];
            state_.add_outstanding(f.dst_leaf, sf.path, l.bytes);
        }
        out.launches.push_back(l);
    }
    return out;
}

void EtherealBalancer::on_progress(const QpRef& qp, Bytes acked) {
    if (!qp.rack_local) state_.release_outstanding(qp.dst_leaf, qp.path, acked);
}

PathId EtherealBalancer::reroute(const QpRef& qp, SimTime now, RerouteCause cause) {
    if (qp.rack_local) return qp.path;
    if (cause == RerouteCause::Timeout) state_.mark_bad(qp.dst_leaf, qp.path, now);
    const PathId next = state_.pick_reroute(qp.dst_leaf, qp.path, now, rng_);
    if (next != qp.path) {
        ++reroutes_;
        state_.release_outstanding(qp.dst_leaf, qp.path, qp.remaining);
        state_.add_outstanding(qp.dst_leaf, next, qp.remaining);
    }
    return next;
}

EcmpBalancer::EcmpBalancer(PolicySpec spec, const Topology& topo, NodeId host, const LbConfig& cfg)
    : LoadBalancer(spec, topo, host), cfg_(cfg) {}

PlacedBatch EcmpBalancer::place(const Batch& batch, SimTime /*now*/) {
    PlacedBatch out;
    for (std::size_t i = 0; i < batch.flows.size(); ++i) {
        const auto& f = batch.flows[i];
        const auto parts = mp_rdma_split(f.demand.size, spec_.splits);
        out.extra_flows += parts.size() - 1;
        const auto paths = paths_to(f.dst_leaf);
        for (std::uint32_t k = 0; k < parts.size(); ++k) {
            QpLaunch l;
            l.parent = i;
            l.bytes = parts[k];
            l.path = ecmp_path(paths, f.src_host, f.dst_host, f.demand.tag, k, cfg_.ecmp_seed);
            out.launches.push_back(l);
        }
    }
    return out;
}

SprayBalancer::SprayBalancer(const Topology& topo, NodeId host, Rng rng)
    : LoadBalancer({PolicyKind::Spray, 1}, topo, host), rng_(std::move(rng)) {}

PlacedBatch SprayBalancer::place(const Batch& batch, SimTime /*now*/) {
    PlacedBatch out;
    for (std::size_t i = 0; i < batch.flows.size(); ++i) {
        out.launches.push_back(QpLaunch{i, batch.flows[i].demand.size, PathId{}, 0, false});
    }
    return out;
}

PathId SprayBalancer::packet_path(const QpRef& qp) {
    if (qp.rack_local) return PathId{};
    return spray_path(paths_to(qp.dst_leaf), rng_);
}

RepsBalancer::RepsBalancer(const Topology& topo, NodeId host, const LbConfig& cfg, Rng rng)
    : LoadBalancer({PolicyKind::Reps, 1}, topo, host), cfg_(cfg), rng_(std::move(rng)) {}

PlacedBatch RepsBalancer::place(const Batch& batch, SimTime /*now*/) {
    PlacedBatch out;
    for (std::size_t i = 0; i < batch.flows.size(); ++i) {
        out.launches.push_back(QpLaunch{i, batch.flows[i].demand.size, PathId{}, 0, false});
    }
    return out;
}

PathId RepsBalancer::packet_path(const QpRef& qp) {
    if (qp.rack_local) return PathId{};
    return flows_[qp.qp].next_path(paths_to(qp.dst_leaf), rng_);
}

void RepsBalancer::on_ack(const QpRef& qp, PathId entropy, bool ce) {
    if (qp.rack_local) return;
    const std::size_t limit = cfg_.reps_cache_limit ? cfg_.reps_cache_limit : qp.credit_packets;
    if (flows_[qp.qp].on_feedback(entropy, ce, limit)) ++reroutes_;
}

void RepsBalancer::on_complete(const QpRef& qp) { flows_.erase(qp.qp); }

PathId RepsBalancer::reroute(const QpRef& qp, SimTime /*now*/, RerouteCause /*cause*/) {
    return qp.path;
}

std::unique_ptr<LoadBalancer> make_load_balancer(const PolicySpec& spec, const Topology& topo,
                                                 NodeId host, const LbConfig& cfg,
                                                 std::uint64_t seed) {
    Rng rng = make_rng(seed, host);
    switch (spec.kind) {
        case PolicyKind::Ethereal:
            return std::make_unique<EtherealBalancer>(topo, host, cfg, std::move(rng));
        case PolicyKind::Ecmp:
        case PolicyKind::MpRdma:
            return std::make_unique<EcmpBalancer>(spec, topo, host, cfg);
        case PolicyKind::Spray: return std::make_unique<SprayBalancer>(topo, host, std::move(rng));
        case PolicyKind::Reps:
            return std::make_unique<RepsBalancer>(topo, host, cfg, std::move(rng));
    }
    throw std::invalid_argument("unhandled policy kind");
}

}  // namespace ethereal
