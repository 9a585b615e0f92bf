#include <gtest/gtest.h>

#include <map>

#include "ethereal/random.hpp"
#include "ethereal/transport.hpp"

using namespace ethereal;

namespace {

constexpr Bytes kMtu = 4096;

QueuePairState fresh(Bytes size, double cwnd_bytes, bool multipath = false) {
    return QueuePairState(size, PathId(0x0100), kMtu, cwnd_bytes, multipath);
}

}  // namespace

TEST(Dctcp, UnmarkedWindowGrowsByOneMtu) {
    auto qp = fresh(64 * kMtu, 8 * kMtu);
    for (int i = 0; i < 4; ++i) qp.on_send(0);
    qp.window_end = 4 * kMtu;
    for (int i = 1; i <= 4; ++i) on_ack(qp, i * kMtu, false, 1.0 / 16, 0);
    EXPECT_DOUBLE_EQ(qp.cwnd, 9.0 * kMtu);
    EXPECT_DOUBLE_EQ(qp.alpha, 0.0);
}

TEST(Dctcp, FullyMarkedWindowHalves) {
    auto qp = fresh(64 * kMtu, 8 * kMtu);
    for (int i = 0; i < 4; ++i) qp.on_send(0);
    qp.window_end = 4 * kMtu;
    for (int i = 1; i <= 4; ++i) on_ack(qp, i * kMtu, true, 1.0, 0);
    EXPECT_DOUBLE_EQ(qp.alpha, 1.0);
    EXPECT_DOUBLE_EQ(qp.cwnd, 4.0 * kMtu);
}

TEST(Dctcp, AlphaArithmetic) {
    auto qp = fresh(64 * kMtu, 8 * kMtu);
    for (int i = 0; i < 4; ++i) qp.on_send(0);
    qp.window_end = 4 * kMtu;
    on_ack(qp, kMtu, true, 1.0 / 16, 0);
    on_ack(qp, 2 * kMtu, false, 1.0 / 16, 0);
    on_ack(qp, 3 * kMtu, false, 1.0 / 16, 0);
    const AckResult r = on_ack(qp, 4 * kMtu, false, 1.0 / 16, 0);
    EXPECT_TRUE(r.window_closed);
    EXPECT_DOUBLE_EQ(qp.alpha, 0.015625);
    EXPECT_DOUBLE_EQ(qp.cwnd, 8.0 * kMtu * (1 - 0.015625 / 2));
}

TEST(Dctcp, StaleAckIgnored) {
    auto qp = fresh(8 * kMtu, 8 * kMtu);
    qp.on_send(0);
    qp.on_send(0);
    on_ack(qp, 2 * kMtu, false, 1.0 / 16, 0);
    const double cwnd = qp.cwnd;
    const AckResult r = on_ack(qp, kMtu, true, 1.0 / 16, 0);
    EXPECT_TRUE(r.stale);
    EXPECT_EQ(qp.snd_una, 2 * kMtu);
    EXPECT_DOUBLE_EQ(qp.cwnd, cwnd);
}

TEST(Dctcp, CwndNeverBelowMtu) {
    auto qp = fresh(64 * kMtu, kMtu);
    qp.alpha = 1.0;
    for (int i = 1; i <= 10; ++i) {
        qp.on_send(0);
        on_ack(qp, i * kMtu, true, 1.0, 0);
        EXPECT_GE(qp.cwnd, static_cast<double>(kMtu));
        EXPECT_LE(qp.snd_nxt, qp.snd_una + static_cast<Bytes>(qp.cwnd) + kMtu);
    }
}

TEST(Nack, GoBackNOnNewPath) {
    auto qp = fresh(64 * kMtu, 16 * kMtu);
    for (int i = 0; i < 16; ++i) qp.on_send(0);
    ASSERT_EQ(qp.snd_nxt, 64 * 1024u);
    EXPECT_TRUE(on_nack(qp, 0, PathId(0x0300), true, from_us(3)));
    EXPECT_EQ(qp.snd_nxt, 0u);
    EXPECT_EQ(qp.snd_una, 0u);
    EXPECT_EQ(qp.path, PathId(0x0300));
    EXPECT_DOUBLE_EQ(qp.cwnd, static_cast<double>(kMtu));
    // The rewound bytes count as retransmissions when they go out again.
    qp.on_send(from_us(4));
    EXPECT_EQ(qp.retx_bytes, kMtu);
}

TEST(Nack, PreserveCwndWhenConfigured) {
    auto qp = fresh(64 * kMtu, 16 * kMtu);
    for (int i = 0; i < 4; ++i) qp.on_send(0);
    EXPECT_TRUE(on_nack(qp, kMtu, PathId(0x0200), false, 0));
    EXPECT_DOUBLE_EQ(qp.cwnd, 16.0 * kMtu);
    EXPECT_EQ(qp.snd_nxt, kMtu);
}

TEST(Nack, AfterCompletionIsNoOp) {
    auto qp = fresh(2 * kMtu, 16 * kMtu);
    qp.on_send(0);
    qp.on_send(0);
    on_ack(qp, 2 * kMtu, false, 1.0 / 16, 0);
    ASSERT_TRUE(qp.done());
    EXPECT_FALSE(on_nack(qp, kMtu, PathId(0x0300), true, 0));
    EXPECT_FALSE(on_timeout(qp, PathId(0x0300), true, 0));
    EXPECT_EQ(qp.path, PathId(0x0100));
}

TEST(Timeout, SinglepathDeadlineFollowsLastActivity) {
    auto qp = fresh(8 * kMtu, 8 * kMtu);
    EXPECT_EQ(qp.timeout_deadline(from_ms(1)), kTimeNever);
    qp.on_send(from_us(5));
    EXPECT_EQ(qp.timeout_deadline(from_ms(1)), from_us(5) + from_ms(1));
    qp.on_send(from_us(7));
    EXPECT_EQ(qp.timeout_deadline(from_ms(1)), from_us(7) + from_ms(1));
    EXPECT_TRUE(on_timeout(qp, PathId(0x0200), true, from_us(1007)));
    EXPECT_EQ(qp.timeouts, 1u);
    EXPECT_EQ(qp.snd_nxt, 0u);
}

TEST(Timeout, MultipathDeadlineFollowsOldestUnacked) {
    auto qp = fresh(8 * kMtu, 8 * kMtu, true);
    qp.on_send(from_us(5));
    qp.on_send(from_us(7));
    EXPECT_EQ(qp.timeout_deadline(from_ms(1)), from_us(5) + from_ms(1));
    on_ack(qp, kMtu, false, 1.0 / 16, from_us(9));
    EXPECT_EQ(qp.timeout_deadline(from_ms(1)), from_us(7) + from_ms(1));
}

TEST(NicScheduler, TwoQpsAlternate) {
    NicScheduler nic;
    nic.add(0);
    nic.add(1);
    std::map<std::uint32_t, Bytes> served;
    std::optional<std::uint32_t> prev;
    for (int i = 0; i < 100; ++i) {
        const auto qp = nic.next([](std::uint32_t) { return true; });
        ASSERT_TRUE(qp.has_value());
        if (prev) {
            EXPECT_NE(*qp, *prev);
        }
        prev = qp;
        served[*qp] += kMtu;
        const Bytes a = served[0], b = served[1];
        EXPECT_LE(a > b ? a - b : b - a, kMtu);
    }
}

TEST(NicScheduler, WindowLimitedQpSkipped) {
    NicScheduler nic;
    for (std::uint32_t q = 0; q < 3; ++q) nic.add(q);
    std::vector<std::uint32_t> order;
    for (int i = 0; i < 6; ++i) order.push_back(*nic.next([](std::uint32_t q) { return q != 1; }));
    EXPECT_EQ(order, (std::vector<std::uint32_t>{0, 2, 0, 2, 0, 2}));
    EXPECT_FALSE(nic.contains(1));
    nic.add(1);
    EXPECT_TRUE(nic.contains(1));
}

TEST(NicScheduler, RandomInsertionKeepsShares) {
    Rng rng = make_rng(5, 0);
    NicScheduler nic;
    for (std::uint32_t q = 0; q < 8; ++q) nic.add(q, uniform_index(rng, nic.size() + 1));
    nic.add(3, 0);  // already present: no effect
    EXPECT_EQ(nic.size(), 8u);
    std::map<std::uint32_t, int> turns;
    for (int i = 0; i < 8000; ++i) ++turns[*nic.next([](std::uint32_t) { return true; })];
    for (auto& [q, n] : turns) EXPECT_EQ(n, 1000) << "qp " << q;
}

TEST(Receiver, SinglepathNacksOncePerHole) {
    Receiver rx(4 * kMtu, false, 0);
    EXPECT_EQ(rx.on_data(0, kMtu).delivered, kMtu);
    auto r = rx.on_data(2 * kMtu, kMtu);
    EXPECT_TRUE(r.dropped);
    EXPECT_TRUE(r.send_nack);
    EXPECT_EQ(r.cumulative, kMtu);
    r = rx.on_data(3 * kMtu, kMtu);
    EXPECT_TRUE(r.dropped);
    EXPECT_FALSE(r.send_nack);
    EXPECT_EQ(rx.reorder().occupancy(), 0u);
    r = rx.on_data(kMtu, kMtu);
    EXPECT_EQ(r.delivered, kMtu);
    EXPECT_EQ(rx.expected(), 2 * kMtu);
}

TEST(Receiver, MultipathReorders) {
    Receiver rx(4 * kMtu, true, 4 * kMtu);
    auto r = rx.on_data(2 * kMtu, kMtu);
    EXPECT_FALSE(r.send_nack);
    EXPECT_EQ(r.delivered, 0u);
    EXPECT_EQ(rx.reorder().occupancy(), kMtu);
    rx.on_data(3 * kMtu, kMtu);
    rx.on_data(0, kMtu);
    r = rx.on_data(kMtu, kMtu);
    EXPECT_EQ(r.delivered, 3 * kMtu);
    EXPECT_TRUE(rx.complete());
    EXPECT_EQ(rx.reorder().occupancy(), 0u);
}

TEST(Receiver, ReorderOverflowDrops) {
    Receiver rx(8 * kMtu, true, 2 * kMtu);
    EXPECT_FALSE(rx.on_data(2 * kMtu, kMtu).dropped);
    EXPECT_FALSE(rx.on_data(3 * kMtu, kMtu).dropped);
    EXPECT_TRUE(rx.on_data(4 * kMtu, kMtu).dropped);
    EXPECT_LE(rx.reorder().occupancy(), rx.reorder().capacity());
}

TEST(Receiver, NeverDeliversTwice) {
    for (bool multipath : {false, true}) {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            Rng rng = make_rng(seed, multipath);
            const Bytes size = 32 * kMtu;
            Receiver rx(size, multipath, 8 * kMtu);
            Bytes delivered = 0;
            int guard = 0;
            while (!rx.complete() && ++guard < 100000) {
                // Senders resend from somewhere near the receiver's frontier.
                const Bytes base = rx.expected() / kMtu;
                const Bytes seg = base + uniform_index(rng, 6);
                const Bytes seq = std::min<Bytes>(seg > 2 ? seg - 2 : 0, size / kMtu - 1) * kMtu;
                delivered += rx.on_data(seq, kMtu).delivered;
                ASSERT_LE(delivered, size);
                ASSERT_EQ(delivered, rx.expected());
            }
            EXPECT_TRUE(rx.complete());
            EXPECT_EQ(delivered, size);
        }
    }
}

TEST(AckRequest, EveryOtherSegmentLastAndWindowFull) {
    auto qp = fresh(5 * kMtu, 16 * kMtu);
    std::vector<bool> req;
    while (qp.can_send()) {
        qp.on_send(0);
        req.push_back(qp.take_ack_request(2));
    }
    EXPECT_EQ(req, (std::vector<bool>{false, true, false, true, true}));

    auto small = fresh(64 * kMtu, kMtu);
    small.on_send(0);
    EXPECT_TRUE(small.take_ack_request(2));

    auto mp = fresh(64 * kMtu, 16 * kMtu, true);
    mp.on_send(0);
    EXPECT_TRUE(mp.take_ack_request(2));
}

TEST(Receiver, HoldsAckUntilRequested) {
    Receiver rx(4 * kMtu, false, 0);
    auto r = rx.on_data(0, kMtu, false, false);
    EXPECT_EQ(r.delivered, kMtu);
    EXPECT_FALSE(r.send_ack);
    r = rx.on_data(kMtu, kMtu, true, false);
    EXPECT_TRUE(r.send_ack);
    EXPECT_EQ(r.cumulative, 2 * kMtu);
    EXPECT_FALSE(r.flush_cumulative.has_value());
    // The final segment is acked even without the bit.
    rx.on_data(2 * kMtu, kMtu, false, false);
    EXPECT_TRUE(rx.on_data(3 * kMtu, kMtu, false, false).send_ack);
}

TEST(Receiver, CeChangeFlushesHeldBytes) {
    Receiver rx(8 * kMtu, false, 0);
    rx.on_data(0, kMtu, false, false);
    auto r = rx.on_data(kMtu, kMtu, false, true);
    ASSERT_TRUE(r.flush_cumulative.has_value());
    EXPECT_EQ(*r.flush_cumulative, kMtu);
    EXPECT_FALSE(r.flush_ce);
    EXPECT_FALSE(r.send_ack);
    r = rx.on_data(2 * kMtu, kMtu, true, true);
    EXPECT_FALSE(r.flush_cumulative.has_value());
    EXPECT_TRUE(r.send_ack);
    // Nothing held: a CE change alone does not flush.
    r = rx.on_data(3 * kMtu, kMtu, true, false);
    EXPECT_FALSE(r.flush_cumulative.has_value());
}
