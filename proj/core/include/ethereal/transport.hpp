#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "ethereal/topology.hpp"
#include "ethereal/units.hpp"

namespace ethereal {

struct TransportConfig {
    Bytes mtu = 4096;
    Bytes data_header_bytes = 64;
    Bytes ack_bytes = 64;
    /// Singlepath senders set the ack-request bit every this many segments, on the last
    /// segment, and on any segment that fills the window. Multipath receivers ack every packet.
    std::uint32_t ack_every = 2;
    double dctcp_g = 1.0 / 16.0;
    /// ECN threshold as a fraction of the end-to-end bandwidth-delay product.
    double ecn_k_bdp = 0.5;
    /// Absolute ECN threshold; overrides ecn_k_bdp when set.
    std::optional<Bytes> ecn_k_bytes;
    double initial_cwnd_bdp = 1.0;
    SimTime timeout = from_ms(1);
    double reorder_capacity_bdp = 4.0;
    bool reset_cwnd_on_reroute = true;
};

enum class PacketKind : std::uint8_t { Data, Ack, Nack };
enum class Ecn : std::uint8_t { NotEct, Ect, Ce };

struct Packet {
    std::uint32_t qp = 0;
    PacketKind kind = PacketKind::Data;
    Ecn ecn = Ecn::NotEct;
    bool ce_echo = false;    ///< acks: the acknowledged data packet carried CE
    bool ack_req = true;     ///< data: receiver acks this segment immediately
    PathId path;
    /// Data: byte offset of the payload. Ack/Nack: cumulative bytes received in order.
    Bytes seq = 0;
    std::uint32_t len = 0;   ///< payload bytes
    std::uint32_t wire = 0;  ///< bytes on the wire including headers
    NodeId src = 0;
    NodeId dst = 0;
    LinkIndex ingress = kNoLink;
};

/// Sender side of one queue pair: DCTCP window plus Go-Back-N pointers.
struct QueuePairState {
    QueuePairState() = default;
    QueuePairState(Bytes size, PathId path, Bytes mtu, double initial_cwnd, bool multipath);

    Bytes size = 0;
    PathId path;
    bool multipath = false;
    Bytes mtu = 4096;

    Bytes snd_una = 0;
    Bytes snd_nxt = 0;
    Bytes high_water = 0;  ///< highest byte ever sent; bytes below it are retransmissions
    double cwnd = 0;
    double alpha = 0;

    // DCTCP observation window: closes once snd_una passes window_end.
    Bytes window_end = 0;
    Bytes window_acked = 0;
    Bytes window_marked = 0;

    SimTime last_activity = 0;
    /// Multipath only: send time of every unacknowledged packet, by sequence.
    std::deque<std::pair<Bytes, SimTime>> sent_log;

    Bytes retx_bytes = 0;
    std::uint32_t timeouts = 0;
    std::uint32_t nacks = 0;
    std::uint32_t since_ack_req = 0;

    bool done() const { return snd_una >= size; }
    Bytes in_flight() const { return snd_nxt - snd_una; }
    Bytes next_len() const;
    /// Has unsent bytes and window room for the next segment.
    bool can_send() const;
    /// Records transmission of the next segment and returns its (seq, len).
    std::pair<Bytes, std::uint32_t> on_send(SimTime now);
    /// Time at which the loss timer fires if nothing changes; kTimeNever when idle.
    SimTime timeout_deadline(SimTime timeout) const;
    /// Call after on_send: whether the segment just sent carries the ack-request bit.
    bool take_ack_request(std::uint32_t every);
};

struct AckResult {
    Bytes newly_acked = 0;
    bool stale = false;
    bool window_closed = false;
    bool completed = false;
};

/// DCTCP reaction to a cumulative ack. Stale or duplicate acks change nothing.
AckResult on_ack(QueuePairState& qp, Bytes cumulative, bool ce, double g, SimTime now);

/// Go-Back-N from the first unacknowledged byte on `new_path`. Returns false when the
/// NACK is stale or the queue pair already finished.
bool on_nack(QueuePairState& qp, Bytes expected, PathId new_path, bool reset_cwnd, SimTime now);

/// Loss-timer recovery: same as a NACK from snd_una. Returns false when nothing is unacked.
bool on_timeout(QueuePairState& qp, PathId new_path, bool reset_cwnd, SimTime now);

/// Out-of-order byte ranges held for a multipath receiver.
class ReorderBuffer {
public:
    explicit ReorderBuffer(Bytes capacity = 0) : capacity_(capacity) {}

    /// False when the segment does not fit (the caller drops it).
    bool insert(Bytes seq, Bytes len);
    /// Pops segments contiguous with `expected`, advancing it; returns bytes released.
    Bytes drain(Bytes& expected);

    Bytes occupancy() const { return occupancy_; }
    Bytes capacity() const { return capacity_; }
    bool empty() const { return segments_.empty(); }

private:
    Bytes capacity_;
    Bytes occupancy_ = 0;
    std::map<Bytes, Bytes> segments_;
};

struct ReceiveResult {
    Bytes delivered = 0;  ///< new in-order bytes released to the application
    bool send_ack = false;
    bool send_nack = false;
    bool dropped = false;
    Bytes cumulative = 0;
    /// CE state changed under unacknowledged bytes: ack them first with the old state.
    std::optional<Bytes> flush_cumulative;
    bool flush_ce = false;
};

/// Receiver side of one queue pair.
class Receiver {
public:
    Receiver() = default;
    Receiver(Bytes size, bool multipath, Bytes reorder_capacity);

    ReceiveResult on_data(Bytes seq, Bytes len, bool ack_req = true, bool ce = false);

    Bytes expected() const { return expected_; }
    Bytes size() const { return size_; }
    bool complete() const { return expected_ >= size_; }
    const ReorderBuffer& reorder() const { return reorder_; }

private:
    Bytes size_ = 0;
    bool multipath_ = false;
    Bytes expected_ = 0;
    std::optional<Bytes> nacked_at_;
    Bytes acked_upto_ = 0;
    bool run_ce_ = false;
    ReorderBuffer reorder_;
};

/// Strict round-robin over the queue pairs of one NIC, one segment per turn.
class NicScheduler {
public:
    /// Appends `qp`, or inserts it at `position` (clamped) when given. No-op if present.
    void add(std::uint32_t qp, std::optional<std::size_t> position = std::nullopt);
    bool contains(std::uint32_t qp) const;
    std::size_t size() const { return ring_.size(); }

    /// Next queue pair for which `eligible` holds, moved to the back of the ring.
    /// Ineligible entries met on the way are removed and must be re-added by the caller.
    template <typename Eligible>
    std::optional<std::uint32_t> next(Eligible&& eligible) {
        while (!ring_.empty()) {
            const std::uint32_t qp = ring_.front();
            ring_.pop_front();
            if (eligible(qp)) {
                ring_.push_back(qp);
                return qp;
            }
            member_[qp] = false;
        }
        return std::nullopt;
    }

private:
    std::deque<std::uint32_t> ring_;
    std::vector<bool> member_;
};

}  // namespace ethereal
