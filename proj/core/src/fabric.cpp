#include "ethereal/fabric.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <map>
#include <queue>
#include <string>
#include <unordered_map>

#include "ethereal/random.hpp"

namespace ethereal {

namespace {

Bytes data_wire(const TransportConfig& tc) { return tc.mtu + tc.data_header_bytes; }

std::uint32_t longest_route_links(const Topology& topo) {
    return topo.tier() == Tier::FatTree ? 6 : 4;
}

}  // namespace

SimTime base_rtt(const Topology& topo, const TransportConfig& tc, const FabricConfig& fc) {
    const std::uint32_t links = longest_route_links(topo);
    const SimTime data_hop = topo.link_latency() + serialization_time(data_wire(tc), topo.link_capacity());
    const SimTime ack_hop = topo.link_latency() + serialization_time(tc.ack_bytes, topo.link_capacity());
    return links * (data_hop + ack_hop) + 2 * (links - 1) * fc.switch_delay;
}

Bytes bdp_bytes(const Topology& topo, const TransportConfig& tc, const FabricConfig& fc) {
    return static_cast<Bytes>(topo.link_capacity() / 8.0 * to_seconds(base_rtt(topo, tc, fc)));
}

Bytes ecn_threshold(const Topology& topo, const TransportConfig& tc, const FabricConfig& fc) {
    if (tc.ecn_k_bytes) return *tc.ecn_k_bytes;
    return static_cast<Bytes>(tc.ecn_k_bdp * static_cast<double>(bdp_bytes(topo, tc, fc)));
}

namespace {

enum class EventKind : std::uint8_t {
    LinkArrive,
    LinkTxDone,
    PfcPause,
    PfcResume,
    QpLaunch,
    BatchFlush,
    QpTimer,
    LinkFail,
    LinkRecover,
    RoutingConverge,
};

struct Event {
    SimTime time;
    std::uint64_t ord;
    std::uint32_t a;
    std::uint32_t b;
    EventKind kind;

    bool operator>(const Event& o) const {
        return time != o.time ? time > o.time : ord > o.ord;
    }
};

struct LinkState {
    std::deque<std::uint32_t> queue;
    Bytes queued = 0;
    Bytes wire = 0;
    Bytes transmitted = 0;
    // Ingress accounting at the receiving switch, for PFC.
    Bytes ingress_bytes = 0;
    std::uint32_t epoch = 0;
    bool busy = false;
    bool paused = false;
    bool pause_sent = false;
    bool failed = false;
    bool converged_dead = false;
    bool from_host = false;
    bool to_host = false;
};

struct FlowState {
    std::uint32_t schedule = 0;
    std::uint32_t step = 0;
    Rank src = 0;
    Rank dst = 0;
    NodeId src_host = 0;
    NodeId dst_host = 0;
    Bytes size = 0;
    std::uint64_t tag = 0;
    SimTime posted = kTimeNever;
    SimTime delivered_at = 0;
    SimTime acked_at = 0;
    Bytes delivered = 0;
    std::uint32_t qps = 0;
    std::uint32_t send_left = 0;
    std::uint32_t recv_left = 0;
    bool send_done = false;
    bool recv_done = false;
    std::vector<std::uint32_t> qp_ids;
};

struct Qp {
    std::uint32_t flow = 0;
    NodeId src = 0;
    NodeId dst = 0;
    LeafIndex dst_leaf = 0;
    bool rack_local = false;
    bool sender_done = false;
    bool receiver_done = false;
    bool timer_pending = false;
    QueuePairState tx;
    Receiver rx;
    std::vector<PathId> path_history;
};

struct RankState {
    std::uint32_t step = 0;
    bool posted = false;
};

struct ScheduleState {
    const CollectiveSchedule* schedule = nullptr;
    std::uint32_t steps = 0;
    std::vector<RankState> ranks;
    // Indexed [rank * steps + step].
    std::vector<std::uint32_t> send_left;
    std::vector<std::uint32_t> recv_left;
    std::vector<std::vector<std::uint32_t>> outgoing;
};

struct HostState {
    NicScheduler nic;
    std::deque<std::uint32_t> control;
    std::unique_ptr<LoadBalancer> lb;
    Rng rng;
    std::vector<BatchFlow> pending;
    bool flush_scheduled = false;
    std::uint32_t active_qps = 0;
};

class Simulator {
public:
    Simulator(const Topology& topo, std::span<const CollectiveSchedule> schedules,
              const PolicySpec& policy, const SimConfig& cfg, std::uint64_t seed)
        : topo_(topo), policy_(policy), cfg_(cfg) {
        const TransportConfig& tc = cfg_.transport;
        bdp_ = bdp_bytes(topo_, tc, cfg_.fabric);
        ecn_k_ = ecn_threshold(topo_, tc, cfg_.fabric);
        init_cwnd_ = tc.initial_cwnd_bdp * static_cast<double>(bdp_);
        reorder_cap_ = static_cast<Bytes>(tc.reorder_capacity_bdp * static_cast<double>(bdp_));
        if (reorder_cap_ < tc.mtu) reorder_cap_ = tc.mtu;

        links_.resize(topo_.links().size());
        for (std::size_t i = 0; i < links_.size(); ++i) {
            const Link& l = topo_.links()[i];
            links_[i].from_host = topo_.node_kind(l.id.from) == NodeKind::Host;
            links_[i].to_host = topo_.node_kind(l.id.to) == NodeKind::Host;
        }
        buffer_used_.assign(topo_.num_nodes(), 0);
        fabric_links_ = topo_.fabric_links();

        LbConfig lbc = cfg_.lb;
        lbc.ecmp_seed = mix64(cfg_.lb.ecmp_seed ^ mix64(seed));
        hosts_.resize(topo_.num_hosts());
        for (NodeId h = 0; h < topo_.num_hosts(); ++h) {
            hosts_[h].lb = make_load_balancer(policy_, topo_, h, lbc, seed);
            hosts_[h].rng = make_rng(seed, (1ull << 32) | h);
        }
        max_active_.assign(topo_.num_hosts(), 0);

        build_flows(schedules);
        validate_failures();
        for (const auto& f : cfg_.failures) schedule_failure(f);
    }

    MetricsReport run() {
        for (std::uint32_t s = 0; s < scheds_.size(); ++s) {
            for (Rank r = 0; r < scheds_[s].ranks.size(); ++r) try_advance(s, r);
        }
        const auto wall_start = std::chrono::steady_clock::now();
        while (!events_.empty()) {
            const Event ev = events_.top();
            events_.pop();
            now_ = ev.time;
            ++report_.events;
            trace_ = mix64(trace_ ^ (static_cast<std::uint64_t>(ev.time) * 0x100000001b3ull) ^
                           (static_cast<std::uint64_t>(ev.kind) << 56) ^
                           (static_cast<std::uint64_t>(ev.a) << 24) ^ ev.b);
            dispatch(ev);
            if (cfg_.check_invariants) check_conservation();
            if ((report_.events & 0xffff) == 0) {
                const double wall = std::chrono::duration<double>(
                                        std::chrono::steady_clock::now() - wall_start)
                                        .count();
                if (wall > cfg_.limits.max_wall_seconds) {
                    throw SimulationAborted("wall-clock limit exceeded at " +
                                            std::to_string(to_seconds(now_)) + " s simulated");
                }
            }
            if (report_.events > cfg_.limits.max_events) {
                throw SimulationAborted("event limit exceeded");
            }
            if (now_ > cfg_.limits.max_sim_time) {
                throw SimulationAborted("simulated-time limit exceeded");
            }
            if (flows_done_ == flows_.size()) break;
        }
        return finish();
    }

private:
    // -----------------------------------------------------------------------
    // Setup
    // -----------------------------------------------------------------------

    NodeId host_of(Rank r) const {
        if (cfg_.placement.empty()) return r;
        return cfg_.placement.at(r);
    }

    void build_flows(std::span<const CollectiveSchedule> schedules) {
        scheds_.resize(schedules.size());
        for (std::uint32_t si = 0; si < schedules.size(); ++si) {
            const CollectiveSchedule& cs = schedules[si];
            if (cs.num_ranks > topo_.num_hosts()) {
                throw std::invalid_argument("schedule has more ranks than the topology has hosts");
            }
            if (!cfg_.placement.empty() && cfg_.placement.size() < cs.num_ranks) {
                throw std::invalid_argument("placement does not cover every rank");
            }
            report_.padded_bytes += cs.padded_bytes;
            ScheduleState& ss = scheds_[si];
            ss.schedule = &cs;
            ss.steps = static_cast<std::uint32_t>(cs.steps.size());
            ss.ranks.resize(cs.num_ranks);
            const std::size_t cells = static_cast<std::size_t>(cs.num_ranks) * ss.steps;
            ss.send_left.assign(cells, 0);
            ss.recv_left.assign(cells, 0);
            ss.outgoing.assign(cells, {});
            for (std::uint32_t step = 0; step < ss.steps; ++step) {
                for (const FlowDemand& d : cs.steps[step].flows) {
                    FlowState f;
                    f.schedule = si;
                    f.step = step;
                    f.src = d.src;
                    f.dst = d.dst;
                    f.src_host = host_of(d.src);
                    f.dst_host = host_of(d.dst);
                    f.size = d.size;
                    f.tag = d.tag;
                    const auto id = static_cast<std::uint32_t>(flows_.size());
                    flows_.push_back(std::move(f));
                    ss.outgoing[static_cast<std::size_t>(d.src) * ss.steps + step].push_back(id);
                    ++ss.send_left[static_cast<std::size_t>(d.src) * ss.steps + step];
                    ++ss.recv_left[static_cast<std::size_t>(d.dst) * ss.steps + step];
                }
            }
        }
    }

    /// Each physical link must alternate fail/recover, starting from up.
    void validate_failures() const {
        std::vector<const FailureAction*> sorted;
        for (const auto& f : cfg_.failures) sorted.push_back(&f);
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](auto* a, auto* b) { return a->time < b->time; });
        std::map<LinkIndex, bool> down;
        for (const FailureAction* f : sorted) {
            auto idx = topo_.find_link(f->link);
            if (!idx) throw std::invalid_argument("failure names a link that does not exist");
            const LinkIndex key = std::min(*idx, topo_.link(*idx).reverse);
            const bool failing = f->action == FailureKind::Fail;
            if (down[key] == failing) {
                throw std::invalid_argument(
                    std::string(failing ? "failing an already-failed link " : "recovering a live link ") +
                    topo_.node_name(f->link.from) + "-" + topo_.node_name(f->link.to));
            }
            down[key] = failing;
        }
    }

    void schedule_failure(const FailureAction& f) {
        auto idx = topo_.find_link(f.link);
        if (!idx) throw std::invalid_argument("failure names a link that does not exist");
        const Link& l = topo_.link(*idx);
        if (l.role == LinkRole::HostUp || l.role == LinkRole::HostDown) {
            throw std::invalid_argument("failures may only target switch-to-switch links");
        }
        push(f.time, f.action == FailureKind::Fail ? EventKind::LinkFail : EventKind::LinkRecover,
             *idx, 0);
    }

    // -----------------------------------------------------------------------
    // Event plumbing
    // -----------------------------------------------------------------------

    void push(SimTime t, EventKind k, std::uint32_t a, std::uint32_t b) {
        events_.push(Event{t, next_ord_++, a, b, k});
    }

    void dispatch(const Event& ev) {
        switch (ev.kind) {
            case EventKind::LinkArrive: on_arrive(ev.a, ev.b); break;
            case EventKind::LinkTxDone: on_tx_done(ev.a); break;
            case EventKind::PfcPause: links_[ev.a].paused = true; break;
            case EventKind::PfcResume:
                links_[ev.a].paused = false;
                resume_link(ev.a);
                break;
            case EventKind::QpLaunch: activate(ev.a, ev.b != 0); break;
            case EventKind::BatchFlush: on_batch_flush(ev.a); break;
            case EventKind::QpTimer: on_qp_timer(ev.a); break;
            case EventKind::LinkFail: on_link_fail(ev.a); break;
            case EventKind::LinkRecover: on_link_recover(ev.a); break;
            case EventKind::RoutingConverge: on_converge(ev.a, ev.b); break;
        }
    }

    std::uint32_t alloc_packet(const Packet& p) {
        if (!free_packets_.empty()) {
            const std::uint32_t i = free_packets_.back();
            free_packets_.pop_back();
            packets_[i] = p;
            return i;
        }
        packets_.push_back(p);
        return static_cast<std::uint32_t>(packets_.size() - 1);
    }

    void free_packet(std::uint32_t i) { free_packets_.push_back(i); }

    // -----------------------------------------------------------------------
    // Collective progress
    // -----------------------------------------------------------------------

    void try_advance(std::uint32_t si, Rank r) {
        ScheduleState& ss = scheds_[si];
        RankState& rs = ss.ranks[r];
        while (rs.step < ss.steps) {
            const std::size_t cell = static_cast<std::size_t>(r) * ss.steps + rs.step;
            if (!rs.posted) {
                rs.posted = true;
                post(ss.outgoing[cell]);
            }
            if (ss.send_left[cell] > 0 || ss.recv_left[cell] > 0) return;
            if (report_.step_completion.size() <= rs.step) report_.step_completion.resize(rs.step + 1, 0);
            report_.step_completion[rs.step] = std::max(report_.step_completion[rs.step], now_);
            ++rs.step;
            rs.posted = false;
        }
    }

    void post(const std::vector<std::uint32_t>& flow_ids) {
        if (flow_ids.empty()) return;
        const NodeId h = flows_[flow_ids.front()].src_host;
        std::vector<BatchFlow> batch;
        batch.reserve(flow_ids.size());
        for (auto id : flow_ids) {
            FlowState& f = flows_[id];
            f.posted = now_;
            BatchFlow bf;
            bf.id = id;
            bf.demand = FlowDemand{f.src, f.dst, f.size, f.step, f.tag};
            bf.src_host = f.src_host;
            bf.dst_host = f.dst_host;
            bf.dst_leaf = topo_.leaf_of_host(f.dst_host);
            batch.push_back(bf);
        }
        Interception ic = flow_arrival(h, topo_.leaf_of_host(h), std::move(batch));
        HostState& hs = hosts_[h];
        if (!ic.immediate.empty()) {
            Batch local;
            local.source = h;
            local.source_leaf = topo_.leaf_of_host(h);
            local.flows = std::move(ic.immediate);
            place_and_launch(h, local);
        }
        if (ic.batch.flows.empty()) return;
        const SimTime window = hs.lb->batch_window();
        if (window > 0 && !cfg_.lb.interceptor.flush_on_post) {
            hs.pending.insert(hs.pending.end(), ic.batch.flows.begin(), ic.batch.flows.end());
            if (!hs.flush_scheduled) {
                hs.flush_scheduled = true;
                push(now_ + window, EventKind::BatchFlush, h, 0);
            }
            return;
        }
        place_and_launch(h, ic.batch);
    }

    void on_batch_flush(NodeId h) {
        HostState& hs = hosts_[h];
        hs.flush_scheduled = false;
        if (hs.pending.empty()) return;
        Interception ic = flow_arrival(h, topo_.leaf_of_host(h), std::move(hs.pending));
        hs.pending.clear();
        place_and_launch(h, ic.batch);
    }

    void place_and_launch(NodeId h, const Batch& batch) {
        HostState& hs = hosts_[h];
        PlacedBatch placed;
        try {
            placed = hs.lb->place(batch, now_);
        } catch (const AllPathsDown& e) {
            hs.pending.insert(hs.pending.end(), batch.flows.begin(), batch.flows.end());
            if (!hs.flush_scheduled) {
                hs.flush_scheduled = true;
                push(std::max(e.retry_at(), now_ + 1), EventKind::BatchFlush, h, 0);
            }
            return;
        }
        report_.extra_flows += placed.extra_flows;
        const bool multipath = policy_.multipath();
        for (const QpLaunch& l : placed.launches) {
            const BatchFlow& bf = batch.flows[l.parent];
            FlowState& f = flows_[bf.id];
            const auto id = static_cast<std::uint32_t>(qps_.size());
            Qp q;
            q.flow = static_cast<std::uint32_t>(bf.id);
            q.src = bf.src_host;
            q.dst = bf.dst_host;
            q.dst_leaf = bf.dst_leaf;
            q.rack_local = bf.dst_leaf == topo_.leaf_of_host(bf.src_host);
            q.tx = QueuePairState(l.bytes, l.path, cfg_.transport.mtu, init_cwnd_, multipath);
            q.rx = Receiver(l.bytes, multipath, reorder_cap_);
            if (cfg_.record_flows && !multipath) q.path_history.push_back(l.path);
            qps_.push_back(std::move(q));
            f.qp_ids.push_back(id);
            ++f.qps;
            ++f.send_left;
            ++f.recv_left;
            bump_active(bf.src_host, +1);
            bump_active(bf.dst_host, +1);
            ++report_.qps_created;
            if (l.delay > 0) {
                push(now_ + l.delay, EventKind::QpLaunch, id, l.random_position ? 1 : 0);
            } else {
                activate(id, l.random_position);
            }
        }
    }

    void bump_active(NodeId h, int delta) {
        auto& n = hosts_[h].active_qps;
        n = static_cast<std::uint32_t>(static_cast<int>(n) + delta);
        if (n > max_active_[h]) max_active_[h] = n;
    }

    void activate(std::uint32_t id, bool random_position) {
        Qp& q = qps_[id];
        HostState& hs = hosts_[q.src];
        std::optional<std::size_t> pos;
        if (random_position) pos = draw_queue_position(hs.rng, hs.nic.size());
        hs.nic.add(id, pos);
        kick_nic(q.src);
    }

    // -----------------------------------------------------------------------
    // Hosts
    // -----------------------------------------------------------------------

    QpRef ref_of(std::uint32_t id) const {
        const Qp& q = qps_[id];
        QpRef r;
        r.qp = id;
        r.dst_leaf = q.dst_leaf;
        r.rack_local = q.rack_local;
        r.path = q.tx.path;
        r.remaining = q.tx.size - q.tx.snd_una;
        r.credit_packets = std::max<std::size_t>(
            1, static_cast<std::size_t>(q.tx.cwnd / static_cast<double>(q.tx.mtu)));
        return r;
    }

    void kick_nic(NodeId h) {
        const LinkIndex up = topo_.host_uplink(h);
        LinkState& ls = links_[up];
        if (ls.busy || ls.paused) return;
        HostState& hs = hosts_[h];
        if (!hs.control.empty()) {
            const std::uint32_t p = hs.control.front();
            hs.control.pop_front();
            injected_ += packets_[p].wire;
            transmit(up, p);
            return;
        }
        auto next = hs.nic.next([&](std::uint32_t id) { return qps_[id].tx.can_send(); });
        if (!next) return;
        Qp& q = qps_[*next];
        const auto [seq, len] = q.tx.on_send(now_);
        Packet p;
        p.qp = *next;
        p.kind = PacketKind::Data;
        p.ecn = Ecn::Ect;
        p.seq = seq;
        p.len = len;
        p.ack_req = q.tx.take_ack_request(cfg_.transport.ack_every);
        p.wire = static_cast<std::uint32_t>(len + cfg_.transport.data_header_bytes);
        p.src = q.src;
        p.dst = q.dst;
        if (policy_.multipath()) {
            p.path = hs.lb->packet_path(ref_of(*next));
        } else {
            p.path = q.tx.path;
        }
        p.ingress = kNoLink;
        const std::uint32_t idx = alloc_packet(p);
        if (cfg_.check_invariants) note_sent_path(idx, p.path);
        injected_ += p.wire;
        transmit(up, idx);
        arm_timer(*next);
    }

    void note_sent_path(std::uint32_t idx, PathId p) {
        if (sent_path_.size() <= idx) sent_path_.resize(idx + 1);
        sent_path_[idx] = p;
    }

    void deliver_to_host(NodeId h, std::uint32_t pi) {
        Packet p = packets_[pi];
        free_packet(pi);
        delivered_ += p.wire;
        switch (p.kind) {
            case PacketKind::Data: on_data(h, pi, p); break;
            case PacketKind::Ack: on_ack_packet(p); break;
            case PacketKind::Nack: on_nack_packet(p); break;
        }
    }

    void on_data(NodeId h, std::uint32_t pi, const Packet& p) {
        Qp& q = qps_[p.qp];
        if (cfg_.check_invariants) check_reverse_path(p, pi);
        const ReceiveResult r = q.rx.on_data(p.seq, p.len, p.ack_req, p.ecn == Ecn::Ce);
        if (r.dropped) {
            if (policy_.multipath()) {
                ++report_.reorder_drops;
            } else {
                ++report_.out_of_order;
            }
        }
        report_.max_reorder_bytes = std::max(report_.max_reorder_bytes, q.rx.reorder().occupancy());
        if (r.delivered > 0) {
            FlowState& f = flows_[q.flow];
            f.delivered += r.delivered;
            if (q.rx.complete() && !q.receiver_done) {
                q.receiver_done = true;
                if (--f.recv_left == 0) on_flow_received(q.flow);
            }
        }
        if (r.flush_cumulative) send_ack(h, p, PacketKind::Ack, *r.flush_cumulative, r.flush_ce);
        if (r.send_ack || r.send_nack) {
            send_ack(h, p, r.send_nack ? PacketKind::Nack : PacketKind::Ack, r.cumulative,
                     p.ecn == Ecn::Ce);
        }
    }

    void send_ack(NodeId h, const Packet& data, PacketKind kind, Bytes cumulative, bool ce) {
        Packet a;
        a.qp = data.qp;
        a.kind = kind;
        a.ecn = Ecn::NotEct;
        a.ce_echo = ce;
        a.path = data.path.swapped();
        a.seq = cumulative;
        a.wire = static_cast<std::uint32_t>(cfg_.transport.ack_bytes);
        a.src = h;
        a.dst = data.src;
        hosts_[h].control.push_back(alloc_packet(a));
        kick_nic(h);
    }

    void on_flow_received(std::uint32_t fid) {
        FlowState& f = flows_[fid];
        f.recv_done = true;
        f.delivered_at = now_;
        last_delivery_ = std::max(last_delivery_, now_);
        ScheduleState& ss = scheds_[f.schedule];
        --ss.recv_left[static_cast<std::size_t>(f.dst) * ss.steps + f.step];
        if (f.send_done) ++flows_done_;
        try_advance(f.schedule, f.dst);
    }

    void on_flow_sent(std::uint32_t fid) {
        FlowState& f = flows_[fid];
        f.send_done = true;
        ScheduleState& ss = scheds_[f.schedule];
        --ss.send_left[static_cast<std::size_t>(f.src) * ss.steps + f.step];
        if (f.recv_done) ++flows_done_;
        try_advance(f.schedule, f.src);
    }

    void on_ack_packet(const Packet& p) {
        // complete_sender may post new flows and grow qps_, so keep no Qp reference past it.
        Qp& q = qps_[p.qp];
        if (q.sender_done) return;
        const NodeId src = q.src;
        HostState& hs = hosts_[src];
        const PathId entropy = p.path.swapped();
        hs.lb->on_ack(ref_of(p.qp), entropy, p.ce_echo);
        const AckResult r = on_ack(q.tx, p.seq, p.ce_echo, cfg_.transport.dctcp_g, now_);
        if (r.stale) return;
        hs.lb->on_progress(ref_of(p.qp), r.newly_acked);
        if (r.completed) {
            complete_sender(p.qp);
        } else {
            hs.nic.add(p.qp);
            arm_timer(p.qp);
        }
        kick_nic(src);
    }

    void complete_sender(std::uint32_t id) {
        Qp& q = qps_[id];
        q.sender_done = true;
        hosts_[q.src].lb->on_complete(ref_of(id));
        report_.retx_bytes += q.tx.retx_bytes;
        bump_active(q.src, -1);
        bump_active(q.dst, -1);
        const std::uint32_t fid = q.flow;
        flows_[fid].acked_at = now_;
        if (--flows_[fid].send_left == 0) on_flow_sent(fid);
    }

    void on_nack_packet(const Packet& p) {
        Qp& q = qps_[p.qp];
        if (q.sender_done || policy_.multipath()) return;
        if (p.seq < q.tx.snd_una || p.seq >= q.tx.snd_nxt) return;
        ++report_.nacks;
        const PathId next = hosts_[q.src].lb->reroute(ref_of(p.qp), now_, RerouteCause::Nack);
        on_nack(q.tx, p.seq, next, cfg_.transport.reset_cwnd_on_reroute, now_);
        note_path(p.qp);
        hosts_[q.src].nic.add(p.qp);
        arm_timer(p.qp);
        kick_nic(q.src);
    }

    void note_path(std::uint32_t id) {
        Qp& q = qps_[id];
        if (cfg_.record_flows && !policy_.multipath() &&
            (q.path_history.empty() || q.path_history.back() != q.tx.path)) {
            q.path_history.push_back(q.tx.path);
        }
    }

    void arm_timer(std::uint32_t id) {
        Qp& q = qps_[id];
        if (q.timer_pending || q.sender_done) return;
        const SimTime d = q.tx.timeout_deadline(cfg_.transport.timeout);
        if (d == kTimeNever) return;
        q.timer_pending = true;
        push(d, EventKind::QpTimer, id, 0);
    }

    void on_qp_timer(std::uint32_t id) {
        Qp& q = qps_[id];
        q.timer_pending = false;
        if (q.sender_done) return;
        const SimTime d = q.tx.timeout_deadline(cfg_.transport.timeout);
        if (d == kTimeNever) return;
        if (d > now_) {
            q.timer_pending = true;
            push(d, EventKind::QpTimer, id, 0);
            return;
        }
        ++report_.timeouts;
        const PathId next = hosts_[q.src].lb->reroute(ref_of(id), now_, RerouteCause::Timeout);
        on_timeout(q.tx, next, cfg_.transport.reset_cwnd_on_reroute, now_);
        note_path(id);
        hosts_[q.src].nic.add(id);
        kick_nic(q.src);
        arm_timer(id);
    }

    // -----------------------------------------------------------------------
    // Links and switches
    // -----------------------------------------------------------------------

    void transmit(LinkIndex li, std::uint32_t pi) {
        LinkState& ls = links_[li];
        const Link& l = topo_.link(li);
        const Packet& p = packets_[pi];
        ls.busy = true;
        ls.wire += p.wire;
        ls.transmitted += p.wire;
        if (cfg_.utilization_bucket > 0 && !ls.from_host && !ls.to_host) {
            util_[{now_ / cfg_.utilization_bucket, li}] += p.wire;
        }
        const SimTime ser = serialization_time(p.wire, l.capacity_bps);
        push(now_ + ser, EventKind::LinkTxDone, li, 0);
        const SimTime pipeline = ls.to_host ? 0 : cfg_.fabric.switch_delay;
        push(now_ + ser + l.latency + pipeline, EventKind::LinkArrive, li, pi);
    }

    void on_tx_done(LinkIndex li) {
        links_[li].busy = false;
        resume_link(li);
    }

    void resume_link(LinkIndex li) {
        if (links_[li].from_host) {
            kick_nic(topo_.link(li).id.from);
        } else {
            start_next(li);
        }
    }

    void drop(std::uint32_t pi) {
        ++report_.drops;
        report_.drop_bytes += packets_[pi].wire;
        dropped_ += packets_[pi].wire;
        free_packet(pi);
    }

    void on_arrive(LinkIndex li, std::uint32_t pi) {
        LinkState& ls = links_[li];
        ls.wire -= packets_[pi].wire;
        if (ls.failed) {
            drop(pi);
            return;
        }
        const NodeId to = topo_.link(li).id.to;
        if (ls.to_host) {
            deliver_to_host(to, pi);
        } else {
            switch_receive(to, li, pi);
        }
    }

    const std::vector<LinkIndex>& route_links(LeafIndex s, LeafIndex d, PathId p) {
        const std::uint64_t key =
            ((static_cast<std::uint64_t>(s) * topo_.num_leaves() + d) << 16) | p.raw();
        auto it = route_cache_.find(key);
        if (it != route_cache_.end()) return it->second;
        const NodeId hs = s * topo_.hosts_per_leaf();
        const NodeId hd = d * topo_.hosts_per_leaf();
        std::vector<LinkIndex> fabric;
        for (LinkIndex l : topo_.trace(hs, hd, p)) {
            if (!links_[l].from_host && !links_[l].to_host) fabric.push_back(l);
        }
        return route_cache_.emplace(key, std::move(fabric)).first->second;
    }

    bool route_alive(LeafIndex s, LeafIndex d, PathId p) {
        for (LinkIndex l : route_links(s, d, p)) {
            if (links_[l].converged_dead) return false;
        }
        return true;
    }

    /// Converged switches steer switch-routed traffic around dead links at the first hop.
    void maybe_remap(std::uint32_t pi, NodeId leaf_node) {
        Packet& p = packets_[pi];
        const LeafIndex s = leaf_node - topo_.num_hosts();
        const LeafIndex d = topo_.leaf_of_host(p.dst);
        if (s == d || route_alive(s, d, p.path)) return;
        std::vector<PathId> alive;
        for (PathId c : topo_.paths(s, d)) {
            if (route_alive(s, d, c)) alive.push_back(c);
        }
        if (alive.empty()) return;
        const std::uint64_t h = mix64(p.path.raw() ^ (static_cast<std::uint64_t>(p.src) << 16) ^
                                      (static_cast<std::uint64_t>(p.dst) << 40));
        p.path = alive[h % alive.size()];
        if (cfg_.check_invariants) note_sent_path(pi, p.path);
    }

    void switch_receive(NodeId sw, LinkIndex in, std::uint32_t pi) {
        if (converged_dead_links_ > 0 && links_[in].from_host && !policy_.source_routed()) {
            maybe_remap(pi, sw);
        }
        Packet& p = packets_[pi];
        const Hop hop = topo_.resolve_hop(sw, p.path, p.dst);
        p.path = hop.next;
        LinkState& out = links_[hop.link];
        if (out.failed) {
            drop(pi);
            return;
        }
        if (buffer_used_[sw] + p.wire > cfg_.fabric.switch_buffer) {
            drop(pi);
            return;
        }
        if (p.kind == PacketKind::Data && p.ecn == Ecn::Ect &&
            ecn_should_mark(out.queued, p.wire, ecn_k_)) {
            p.ecn = Ecn::Ce;
            ++report_.ecn_marks;
        }
        p.ingress = in;
        out.queue.push_back(pi);
        out.queued += p.wire;
        buffer_used_[sw] += p.wire;
        links_[in].ingress_bytes += p.wire;
        check_pause(in, sw);
        start_next(hop.link);
    }

    double pfc_threshold(NodeId sw) const {
        return pfc_pause_threshold(cfg_.fabric.switch_buffer, buffer_used_[sw],
                                   cfg_.fabric.pfc_alpha);
    }

    void check_pause(LinkIndex in, NodeId sw) {
        if (!cfg_.fabric.pfc) return;
        LinkState& ls = links_[in];
        if (!ls.pause_sent && static_cast<double>(ls.ingress_bytes) > pfc_threshold(sw)) {
            ls.pause_sent = true;
            ++report_.pfc_pauses;
            push(now_ + topo_.link(in).latency, EventKind::PfcPause, in, 0);
        }
    }

    void check_resume(LinkIndex in, NodeId sw) {
        if (!cfg_.fabric.pfc) return;
        LinkState& ls = links_[in];
        if (ls.pause_sent && static_cast<double>(ls.ingress_bytes) <= pfc_threshold(sw) / 2.0) {
            ls.pause_sent = false;
            push(now_ + topo_.link(in).latency, EventKind::PfcResume, in, 0);
        }
    }

    void release_buffer(LinkIndex egress, std::uint32_t pi) {
        const NodeId sw = topo_.link(egress).id.from;
        const Packet& p = packets_[pi];
        links_[egress].queued -= p.wire;
        buffer_used_[sw] -= p.wire;
        links_[p.ingress].ingress_bytes -= p.wire;
        check_resume(p.ingress, sw);
    }

    void start_next(LinkIndex li) {
        LinkState& ls = links_[li];
        if (ls.busy || ls.paused || ls.queue.empty()) return;
        const std::uint32_t pi = ls.queue.front();
        ls.queue.pop_front();
        release_buffer(li, pi);
        transmit(li, pi);
    }

    // -----------------------------------------------------------------------
    // Failures
    // -----------------------------------------------------------------------

    void fail_direction(LinkIndex li) {
        LinkState& ls = links_[li];
        ls.failed = true;
        ++ls.epoch;
        while (!ls.queue.empty()) {
            const std::uint32_t pi = ls.queue.front();
            ls.queue.pop_front();
            release_buffer(li, pi);
            drop(pi);
        }
    }

    void on_link_fail(LinkIndex li) {
        const LinkIndex rev = topo_.link(li).reverse;
        if (links_[li].failed) {
            throw std::invalid_argument("link " + topo_.node_name(topo_.link(li).id.from) + "-" +
                                        topo_.node_name(topo_.link(li).id.to) +
                                        " failed while already down");
        }
        fail_direction(li);
        fail_direction(rev);
        push(now_ + cfg_.fabric.routing_convergence, EventKind::RoutingConverge, li,
             links_[li].epoch);
    }

    void on_converge(LinkIndex li, std::uint32_t epoch) {
        if (!links_[li].failed || links_[li].epoch != epoch) return;
        for (LinkIndex l : {li, topo_.link(li).reverse}) {
            if (!links_[l].converged_dead) {
                links_[l].converged_dead = true;
                ++converged_dead_links_;
            }
        }
    }

    void on_link_recover(LinkIndex li) {
        for (LinkIndex l : {li, topo_.link(li).reverse}) {
            LinkState& ls = links_[l];
            if (ls.converged_dead) --converged_dead_links_;
            ls.failed = false;
            ls.converged_dead = false;
            ls.paused = false;
            ++ls.epoch;
        }
        start_next(li);
        start_next(topo_.link(li).reverse);
    }

    // -----------------------------------------------------------------------
    // Invariants
    // -----------------------------------------------------------------------

    void check_conservation() {
        ++report_.invariant_checks;
        Bytes in_network = 0;
        for (const auto& l : links_) in_network += l.queued + l.wire;
        if (injected_ != delivered_ + dropped_ + in_network) {
            throw InvariantViolation("byte conservation broken at t=" + std::to_string(now_) +
                                     ": injected " + std::to_string(injected_) + ", delivered " +
                                     std::to_string(delivered_) + ", dropped " +
                                     std::to_string(dropped_) + ", in network " +
                                     std::to_string(in_network));
        }
    }

    void check_reverse_path(const Packet& p, std::uint32_t pi) {
        const PathId sent = sent_path_.at(pi);
        const auto fwd = topo_.trace(p.src, p.dst, sent);
        const auto back = topo_.trace(p.dst, p.src, p.path.swapped());
        if (fwd.size() != back.size()) throw InvariantViolation("ack route length differs");
        for (std::size_t i = 0; i < fwd.size(); ++i) {
            if (topo_.link(fwd[i]).reverse != back[back.size() - 1 - i]) {
                throw InvariantViolation("ack route is not the reverse of the data route");
            }
        }
        if (p.path.swapped().swapped() != p.path) throw InvariantViolation("label swap broken");
    }

    // -----------------------------------------------------------------------
    // Report
    // -----------------------------------------------------------------------

    MetricsReport finish() {
        MetricsReport& r = report_;
        r.flows = flows_.size();
        r.completed = flows_done_ == flows_.size();
        r.cct = last_delivery_;
        r.cct_s = to_seconds(last_delivery_);
        r.trace_hash = trace_;

        bool ok = true;
        for (const FlowState& f : flows_) {
            if (!f.recv_done || !f.send_done) {
                ++r.incomplete_flows;
                ok = false;
                continue;
            }
            if (f.delivered != f.size) ok = false;
            Bytes sum = 0;
            for (auto id : f.qp_ids) {
                const Qp& q = qps_[id];
                sum += q.tx.size;
                if (q.rx.expected() != q.tx.size) ok = false;
            }
            if (sum != f.size) ok = false;
        }
        r.delivery_ok = ok && r.incomplete_flows == 0;

        for (NodeId h = 0; h < max_active_.size(); ++h) {
            if (max_active_[h] > r.max_qps) {
                r.max_qps = max_active_[h];
                r.max_qps_host = h;
            }
        }
        for (const auto& h : hosts_) r.reroutes += h.lb->reroutes();

        r.link_bytes.resize(links_.size());
        for (std::size_t i = 0; i < links_.size(); ++i) r.link_bytes[i] = links_[i].transmitted;
        if (r.cct > 0 && !fabric_links_.empty()) {
            double sum = 0;
            for (LinkIndex l : fabric_links_) {
                const double u = static_cast<double>(links_[l].transmitted) * 8.0 /
                                 (topo_.link(l).capacity_bps * r.cct_s);
                r.max_link_util = std::max(r.max_link_util, u);
                sum += u;
            }
            r.mean_link_util = sum / static_cast<double>(fabric_links_.size());
        }

        if (cfg_.record_flows) {
            r.flow_records.reserve(flows_.size());
            for (std::size_t i = 0; i < flows_.size(); ++i) {
                const FlowState& f = flows_[i];
                FlowRecord fr;
                fr.flow = i;
                fr.schedule = f.schedule;
                fr.step = f.step;
                fr.src = f.src;
                fr.dst = f.dst;
                fr.src_host = f.src_host;
                fr.dst_host = f.dst_host;
                fr.bytes = f.size;
                fr.posted = f.posted;
                fr.delivered = f.delivered_at;
                fr.acked = f.acked_at;
                fr.subflows = f.qps;
                for (auto id : f.qp_ids) {
                    fr.retx_bytes += qps_[id].tx.retx_bytes;
                    for (PathId p : qps_[id].path_history) fr.path_history.push_back(p);
                }
                r.flow_records.push_back(std::move(fr));
            }
        }
        if (cfg_.utilization_bucket > 0) {
            for (const auto& [key, bytes] : util_) {
                r.utilization.push_back(
                    UtilizationSample{key.first * cfg_.utilization_bucket, key.second, bytes});
            }
        }
        return r;
    }

    const Topology& topo_;
    PolicySpec policy_;
    const SimConfig& cfg_;

    Bytes bdp_ = 0;
    Bytes ecn_k_ = 0;
    double init_cwnd_ = 0;
    Bytes reorder_cap_ = 0;

    std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
    std::uint64_t next_ord_ = 0;
    SimTime now_ = 0;
    std::uint64_t trace_ = 0x6574686572ull;

    std::vector<LinkState> links_;
    std::vector<Bytes> buffer_used_;
    std::vector<LinkIndex> fabric_links_;
    std::uint32_t converged_dead_links_ = 0;
    std::unordered_map<std::uint64_t, std::vector<LinkIndex>> route_cache_;

    std::vector<Packet> packets_;
    std::vector<std::uint32_t> free_packets_;
    std::vector<PathId> sent_path_;

    std::vector<HostState> hosts_;
    std::vector<std::uint32_t> max_active_;
    std::vector<ScheduleState> scheds_;
    std::vector<FlowState> flows_;
    std::vector<Qp> qps_;
    std::size_t flows_done_ = 0;
    SimTime last_delivery_ = 0;

    Bytes injected_ = 0;
    Bytes delivered_ = 0;
    Bytes dropped_ = 0;

    std::map<std::pair<SimTime, LinkIndex>, Bytes> util_;
    MetricsReport report_;
};

}  // namespace

MetricsReport run(const Topology& topo, std::span<const CollectiveSchedule> schedules,
                  const PolicySpec& policy, const SimConfig& config, std::uint64_t seed) {
    Simulator sim(topo, schedules, policy, config, seed);
    return sim.run();
}

}  // namespace ethereal
