#include "ethereal/transport.hpp"

#include <algorithm>

namespace ethereal {

QueuePairState::QueuePairState(Bytes size_, PathId path_, Bytes mtu_, double initial_cwnd,
                               bool multipath_)
    : size(size_), path(path_), multipath(multipath_), mtu(mtu_) {
    cwnd = std::max(initial_cwnd, static_cast<double>(mtu));
}

Bytes QueuePairState::next_len() const {
    return snd_nxt >= size ? 0 : std::min(mtu, size - snd_nxt);
}

bool QueuePairState::can_send() const {
    const Bytes len = next_len();
    if (len == 0) return false;
    return static_cast<double>(in_flight() + len) <= cwnd || in_flight() == 0;
}

std::pair<Bytes, std::uint32_t> QueuePairState::on_send(SimTime now) {
    const Bytes seq = snd_nxt;
    const auto len = static_cast<std::uint32_t>(next_len());
    if (seq < high_water) retx_bytes += std::min<Bytes>(len, high_water - seq);
    snd_nxt += len;
    high_water = std::max(high_water, snd_nxt);
    last_activity = now;
    if (multipath) sent_log.emplace_back(seq, now);
    return {seq, len};
}

SimTime QueuePairState::timeout_deadline(SimTime timeout) const {
    if (done() || in_flight() == 0) return kTimeNever;
    if (multipath) {
        return sent_log.empty() ? last_activity + timeout : sent_log.front().second + timeout;
    }
    return last_activity + timeout;
}

bool QueuePairState::take_ack_request(std::uint32_t every) {
    ++since_ack_req;
    if (multipath || since_ack_req >= every || snd_nxt >= size || !can_send()) {
        since_ack_req = 0;
        return true;
    }
    return false;
}

AckResult on_ack(QueuePairState& qp, Bytes cumulative, bool ce, double g, SimTime now) {
    AckResult r;
    if (cumulative <= qp.snd_una || qp.done()) {
        r.stale = true;
        return r;
    }
    cumulative = std::min(cumulative, qp.size);
    r.newly_acked = cumulative - qp.snd_una;
    qp.snd_una = cumulative;
    // A late ack for bytes sent before a Go-Back-N rewind also covers the rewound range.
    qp.snd_nxt = std::max(qp.snd_nxt, qp.snd_una);
    qp.last_activity = now;
    while (!qp.sent_log.empty() && qp.sent_log.front().first < qp.snd_una) qp.sent_log.pop_front();

    qp.window_acked += r.newly_acked;
    if (ce) qp.window_marked += r.newly_acked;
    if (qp.snd_una >= qp.window_end) {
        const double f = qp.window_acked == 0
                             ? 0.0
                             : static_cast<double>(qp.window_marked) /
                                   static_cast<double>(qp.window_acked);
        qp.alpha = (1.0 - g) * qp.alpha + g * f;
        if (qp.window_marked > 0) {
            qp.cwnd *= 1.0 - qp.alpha / 2.0;
        } else {
            qp.cwnd += static_cast<double>(qp.mtu);
        }
        qp.cwnd = std::max(qp.cwnd, static_cast<double>(qp.mtu));
        qp.window_end = qp.snd_nxt;
        qp.window_acked = 0;
        qp.window_marked = 0;
        r.window_closed = true;
    }
    r.completed = qp.done();
    return r;
}

namespace {

void go_back_n(QueuePairState& qp, PathId new_path, bool reset_cwnd, SimTime now) {
    qp.snd_nxt = qp.snd_una;
    qp.sent_log.clear();
    qp.path = new_path;
    if (reset_cwnd) qp.cwnd = static_cast<double>(qp.mtu);
    qp.window_end = qp.snd_una;
    qp.window_acked = 0;
    qp.window_marked = 0;
    qp.last_activity = now;
}

}  // namespace

bool on_nack(QueuePairState& qp, Bytes expected, PathId new_path, bool reset_cwnd, SimTime now) {
    if (qp.done() || expected < qp.snd_una || expected >= qp.snd_nxt) return false;
    qp.snd_una = expected;
    ++qp.nacks;
    go_back_n(qp, new_path, reset_cwnd, now);
    return true;
}

bool on_timeout(QueuePairState& qp, PathId new_path, bool reset_cwnd, SimTime now) {
    if (qp.done() || qp.in_flight() == 0) return false;
    ++qp.timeouts;
    go_back_n(qp, new_path, reset_cwnd, now);
    return true;
}

bool ReorderBuffer::insert(Bytes seq, Bytes len) {
    if (segments_.contains(seq)) return true;
    if (occupancy_ + len > capacity_) return false;
    segments_.emplace(seq, len);
    occupancy_ += len;
    return true;
}

Bytes ReorderBuffer::drain(Bytes& expected) {
    Bytes released = 0;
    auto it = segments_.begin();
    while (it != segments_.end() && it->first <= expected) {
        const Bytes end = it->first + it->second;
        if (end > expected) {
            released += end - expected;
            expected = end;
        }
        occupancy_ -= it->second;
        it = segments_.erase(it);
    }
    return released;
}

Receiver::Receiver(Bytes size, bool multipath, Bytes reorder_capacity)
    : size_(size), multipath_(multipath), reorder_(reorder_capacity) {}

ReceiveResult Receiver::on_data(Bytes seq, Bytes len, bool ack_req, bool ce) {
    ReceiveResult r;
    if (seq == expected_) {
        if (expected_ > acked_upto_ && ce != run_ce_) {
            r.flush_cumulative = expected_;
            r.flush_ce = run_ce_;
        }
        run_ce_ = ce;
        expected_ += len;
        r.delivered = len;
        if (multipath_) r.delivered += reorder_.drain(expected_);
        nacked_at_.reset();
        r.send_ack = ack_req || multipath_ || complete();
    } else if (seq < expected_) {
        r.send_ack = true;  // duplicate after a rewind; re-acknowledge
    } else if (multipath_) {
        if (reorder_.insert(seq, len)) {
            r.send_ack = true;
        } else {
            r.dropped = true;
        }
    } else {
        r.dropped = true;
        if (nacked_at_ != expected_) {
            nacked_at_ = expected_;
            r.send_nack = true;
        }
    }
    r.cumulative = expected_;
    if (r.send_ack || r.send_nack) acked_upto_ = expected_;
    return r;
}

void NicScheduler::add(std::uint32_t qp, std::optional<std::size_t> position) {
    if (qp >= member_.size()) member_.resize(qp + 1, false);
    if (member_[qp]) return;
    member_[qp] = true;
    if (position) {
        const std::size_t at = std::min(*position, ring_.size());
        ring_.insert(ring_.begin() + static_cast<std::ptrdiff_t>(at), qp);
    } else {
        ring_.push_back(qp);
    }
}

bool NicScheduler::contains(std::uint32_t qp) const {
    return qp < member_.size() && member_[qp];
}

}  // namespace ethereal
