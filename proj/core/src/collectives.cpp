#include "ethereal/collectives.hpp"

#include <algorithm>
#include <bit>
#include <istream>
#include <ostream>
#include <sstream>

namespace ethereal {

namespace {

/// Per-piece size when `total` is cut into `pieces`; rounds up to whole MTUs
/// when the split is not exact.
Bytes piece_size(Bytes total, std::uint64_t pieces, Bytes mtu) {
    if (total % pieces == 0) return total / pieces;
    const Bytes raw = (total + pieces - 1) / pieces;
    return (raw + mtu - 1) / mtu * mtu;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw CollectiveError(what);
}

void check_common(std::uint32_t ranks, Bytes message_bytes, Bytes mtu) {
    require(ranks >= 2, "a collective needs at least 2 ranks");
    require(message_bytes > 0, "message size must be positive");
    require(mtu > 0, "mtu must be positive");
}

class Builder {
public:
    explicit Builder(CollectiveSchedule& s) : s_(s) {}

    void add(std::uint32_t step, Rank src, Rank dst, Bytes size) {
        if (s_.steps.size() <= step) s_.steps.resize(step + 1);
        s_.steps[step].flows.push_back(FlowDemand{src, dst, size, step, next_tag_++});
    }

private:
    CollectiveSchedule& s_;
    std::uint64_t next_tag_ = 0;
};

/// Tree whose interior nodes are the even ranks: rank r with lowest set bit b
/// has children r - b/2 and r + b/2 (pulled down the left spine when out of range).
BinaryTree even_interior_tree(std::uint32_t n) {
    BinaryTree t;
    t.root = 0;
    t.parent.assign(n, std::nullopt);
    t.children.assign(n, {});
    auto link = [&](Rank p, Rank c) {
        t.children[p].push_back(c);
        t.parent[c] = p;
    };
    if (n > 1) link(0, std::bit_floor(n - 1));
    for (Rank r = 1; r < n; ++r) {
        const Rank low = r & (~r + 1);
        if (low == 1) continue;
        link(r, r - low / 2);
        for (Rank h = low / 2; h >= 1; h /= 2) {
            if (r + h < n) {
                link(r, r + h);
                break;
            }
        }
    }
    return t;
}

BinaryTree remap(const BinaryTree& src, std::uint32_t n, auto&& map) {
    BinaryTree t;
    t.root = map(src.root);
    t.parent.assign(n, std::nullopt);
    t.children.assign(n, {});
    for (Rank r = 0; r < n; ++r) {
        for (Rank c : src.children[r]) {
            t.children[map(r)].push_back(map(c));
            t.parent[map(c)] = map(r);
        }
    }
    return t;
}

std::vector<std::uint32_t> heights(const BinaryTree& t) {
    std::vector<std::uint32_t> h(t.children.size(), 0);
    // Post-order without recursion: process ranks deepest first.
    std::vector<Rank> order{t.root};
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (Rank c : t.children[order[i]]) order.push_back(c);
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        for (Rank c : t.children[*it]) h[*it] = std::max(h[*it], h[c] + 1);
    }
    return h;
}

std::vector<std::uint32_t> depths(const BinaryTree& t) {
    std::vector<std::uint32_t> d(t.children.size(), 0);
    std::vector<Rank> order{t.root};
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (Rank c : t.children[order[i]]) {
            d[c] = d[order[i]] + 1;
            order.push_back(c);
        }
    }
    return d;
}

}  // namespace

std::string_view to_string(CollectiveAlgorithm a) {
    switch (a) {
    case CollectiveAlgorithm::AllToAll: return "all_to_all";
    case CollectiveAlgorithm::RecursiveDoubling: return "recursive_doubling";
    case CollectiveAlgorithm::Ring: return "ring";
    case CollectiveAlgorithm::DoubleBinaryTree: return "double_binary_tree";
    case CollectiveAlgorithm::Custom: return "custom";
    }
    return "custom";
}

std::optional<CollectiveAlgorithm> parse_collective(std::string_view name) {
    for (auto a : {CollectiveAlgorithm::AllToAll, CollectiveAlgorithm::RecursiveDoubling,
                   CollectiveAlgorithm::Ring, CollectiveAlgorithm::DoubleBinaryTree,
                   CollectiveAlgorithm::Custom}) {
        if (to_string(a) == name) return a;
    }
    return std::nullopt;
}

std::size_t CollectiveSchedule::flow_count() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.flows.size();
    return n;
}

Bytes CollectiveSchedule::total_bytes() const {
    Bytes n = 0;
    for (const auto& s : steps) {
        for (const auto& f : s.flows) n += f.size;
    }
    return n;
}

Bytes CollectiveSchedule::bytes_sent_by(Rank r) const {
    Bytes n = 0;
    for (const auto& s : steps) {
        for (const auto& f : s.flows) {
            if (f.src == r) n += f.size;
        }
    }
    return n;
}

CollectiveSchedule gen_all_to_all(std::uint32_t ranks, Bytes message_bytes, Bytes mtu) {
    check_common(ranks, message_bytes, mtu);
    CollectiveSchedule s;
    s.algorithm = CollectiveAlgorithm::AllToAll;
    s.num_ranks = ranks;
    s.message_bytes = message_bytes;
    const Bytes chunk = piece_size(message_bytes, ranks, mtu);
    s.padded_bytes = chunk * ranks - message_bytes;
    Builder b(s);
    for (std::uint32_t phase = 0; phase < 2; ++phase) {
        for (Rank src = 0; src < ranks; ++src) {
            for (Rank dst = 0; dst < ranks; ++dst) {
                if (src != dst) b.add(phase, src, dst, chunk);
            }
        }
    }
    return s;
}

CollectiveSchedule gen_recursive_doubling(std::uint32_t ranks, Bytes message_bytes, Bytes mtu) {
    check_common(ranks, message_bytes, mtu);
    require(std::has_single_bit(ranks), "recursive doubling needs a power-of-two rank count");
    CollectiveSchedule s;
    s.algorithm = CollectiveAlgorithm::RecursiveDoubling;
    s.num_ranks = ranks;
    s.message_bytes = message_bytes;
    const Bytes smallest = piece_size(message_bytes, ranks, mtu);
    const Bytes padded = smallest * ranks;
    s.padded_bytes = padded - message_bytes;
    const auto levels = static_cast<std::uint32_t>(std::countr_zero(ranks));
    Builder b(s);
    // Reduce-scatter: step i (1-based) exchanges padded * 2^-i with the partner at distance 2^(i-1).
    for (std::uint32_t i = 1; i <= levels; ++i) {
        const Rank distance = Rank{1} << (i - 1);
        const Bytes size = padded >> i;
        for (Rank r = 0; r < ranks; ++r) b.add(i - 1, r, r ^ distance, size);
    }
    // All-gather mirrors the exchange pattern with growing sizes.
    for (std::uint32_t j = 1; j <= levels; ++j) {
        const std::uint32_t i = levels - j + 1;
        const Rank distance = Rank{1} << (i - 1);
        const Bytes size = padded >> i;
        for (Rank r = 0; r < ranks; ++r) b.add(levels + j - 1, r, r ^ distance, size);
    }
    return s;
}

CollectiveSchedule gen_ring(std::uint32_t ranks, Bytes message_bytes, Bytes mtu) {
    check_common(ranks, message_bytes, mtu);
    CollectiveSchedule s;
    s.algorithm = CollectiveAlgorithm::Ring;
    s.num_ranks = ranks;
    s.message_bytes = message_bytes;
    const Bytes chunk = piece_size(message_bytes, ranks, mtu);
    s.padded_bytes = chunk * ranks - message_bytes;
    Builder b(s);
    for (std::uint32_t step = 0; step < 2 * (ranks - 1); ++step) {
        for (Rank r = 0; r < ranks; ++r) b.add(step, r, (r + 1) % ranks, chunk);
    }
    return s;
}

std::pair<BinaryTree, BinaryTree> double_binary_trees(std::uint32_t n) {
    require(n >= 2, "a tree needs at least 2 ranks");
    BinaryTree a = even_interior_tree(n);
    BinaryTree b = (n % 2 == 0) ? remap(a, n, [n](Rank r) { return n - 1 - r; })
                                : remap(a, n, [n](Rank r) { return (r + 1) % n; });
    return {std::move(a), std::move(b)};
}

CollectiveSchedule gen_double_binary_tree(std::uint32_t ranks, Bytes message_bytes,
                                          std::uint32_t chunks, Bytes mtu) {
    check_common(ranks, message_bytes, mtu);
    require(chunks >= 1, "double binary tree needs at least one chunk");
    CollectiveSchedule s;
    s.algorithm = CollectiveAlgorithm::DoubleBinaryTree;
    s.num_ranks = ranks;
    s.message_bytes = message_bytes;
    const Bytes chunk = piece_size(message_bytes, 2ull * chunks, mtu);
    s.padded_bytes = chunk * 2 * chunks - message_bytes;

    const auto [first, second] = double_binary_trees(ranks);
    const BinaryTree* trees[] = {&first, &second};
    std::uint32_t max_height = 0;
    for (const auto* t : trees) max_height = std::max(max_height, heights(*t)[t->root]);
    const std::uint32_t broadcast_base = chunks + max_height - 1;

    Builder b(s);
    for (const auto* t : trees) {
        const auto h = heights(*t);
        for (std::uint32_t c = 0; c < chunks; ++c) {
            for (Rank r = 0; r < ranks; ++r) {
                if (t->parent[r]) b.add(c + h[r], r, *t->parent[r], chunk);
            }
        }
    }
    for (const auto* t : trees) {
        const auto d = depths(*t);
        for (std::uint32_t c = 0; c < chunks; ++c) {
            for (Rank r = 0; r < ranks; ++r) {
                for (Rank child : t->children[r]) b.add(broadcast_base + c + d[r], r, child, chunk);
            }
        }
    }
    // Builder appends per tree; keep each step's flows ordered by source for stable output.
    for (auto& step : s.steps) {
        std::stable_sort(step.flows.begin(), step.flows.end(),
                         [](const FlowDemand& x, const FlowDemand& y) { return x.src < y.src; });
    }
    return s;
}

CollectiveSchedule generate(CollectiveAlgorithm algorithm, std::uint32_t ranks,
                            Bytes message_bytes, Bytes mtu) {
    switch (algorithm) {
    case CollectiveAlgorithm::AllToAll: return gen_all_to_all(ranks, message_bytes, mtu);
    case CollectiveAlgorithm::RecursiveDoubling:
        return gen_recursive_doubling(ranks, message_bytes, mtu);
    case CollectiveAlgorithm::Ring: return gen_ring(ranks, message_bytes, mtu);
    case CollectiveAlgorithm::DoubleBinaryTree:
        return gen_double_binary_tree(ranks, message_bytes, 4, mtu);
    case CollectiveAlgorithm::Custom: break;
    }
    throw CollectiveError("custom schedules cannot be generated");
}

void write_schedule(std::ostream& out, const CollectiveSchedule& s) {
    out << "# " << to_string(s.algorithm) << ' ' << s.num_ranks << ' ' << s.message_bytes << ' '
        << s.padded_bytes << '\n';
    for (const auto& step : s.steps) {
        for (const auto& f : step.flows) {
            out << f.step << ' ' << f.src << ' ' << f.dst << ' ' << f.size << '\n';
        }
    }
}

CollectiveSchedule read_schedule(std::istream& in) {
    CollectiveSchedule s;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    Builder b(s);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        if (line.front() == '#') {
            if (have_header) continue;
            std::string hash;
            std::string algo;
            fields >> hash >> algo >> s.num_ranks >> s.message_bytes >> s.padded_bytes;
            const auto parsed = parse_collective(algo);
            require(fields && parsed.has_value(),
                    "schedule line " + std::to_string(line_no) + ": malformed header");
            s.algorithm = *parsed;
            have_header = true;
            continue;
        }
        std::uint32_t step = 0;
        Rank src = 0;
        Rank dst = 0;
        Bytes size = 0;
        fields >> step >> src >> dst >> size;
        std::string extra;
        require(fields && !(fields >> extra),
                "schedule line " + std::to_string(line_no) + ": expected 'step src dst bytes'");
        require(size > 0 && src != dst,
                "schedule line " + std::to_string(line_no) + ": flow must be non-empty and src != dst");
        s.num_ranks = std::max<std::uint32_t>(s.num_ranks, std::max(src, dst) + 1);
        b.add(step, src, dst, size);
    }
    return s;
}

}  // namespace ethereal
