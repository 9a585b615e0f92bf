#include "ethereal/verify.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ethereal/lb.hpp"
#include "ethereal/oracle.hpp"
#include "ethereal/random.hpp"

namespace ethereal {

namespace {

ExactBytes to_exact(Bytes b) { return ExactBytes(static_cast<std::int64_t>(b)); }

std::string show(ExactBytes v) {
    std::ostringstream s;
    s << v.numerator();
    if (v.denominator() != 1) s << '/' << v.denominator();
    return s.str();
}

std::vector<PathId> leaf_spine_paths(std::uint32_t s) {
    std::vector<PathId> p;
    for (std::uint32_t u = 0; u < s; ++u) p.push_back(PathId::from_hops(static_cast<std::uint8_t>(u), 0));
    return p;
}

/// Max per-uplink load of select_path for one source sending `groups` to one leaf.
ExactBytes ethereal_max_load(const DemandInstance& inst) {
    Batch batch;
    batch.source = 0;
    batch.source_leaf = 0;
    for (const auto& g : inst.groups) {
        for (std::uint64_t i = 0; i < g.count; ++i) {
            BatchFlow f;
            f.id = batch.flows.size();
            f.demand.size = g.size;
            f.dst_leaf = 1;
            batch.flows.push_back(f);
        }
    }
    PathState state(2, leaf_spine_paths(inst.uplinks), from_ms(250));
    const Assignment a = select_path(batch, state, 0);
    ExactBytes worst = 0;
    for (const auto& [p, load] : a.load_by_path(batch, 1)) worst = std::max(worst, load);
    return worst;
}

}  // namespace

std::vector<VerifyCheck> run_verify_suite(std::uint64_t seed, std::uint32_t random_instances) {
    std::vector<VerifyCheck> out;

    {
        Rng rng = make_rng(seed, 0);
        std::uint32_t bad = 0;
        std::string first;
        for (std::uint32_t i = 0; i < random_instances; ++i) {
            DemandInstance inst;
            inst.uplinks = static_cast<std::uint32_t>(1 + uniform_index(rng, 8));
            const std::uint64_t n = uniform_index(rng, 25);
            const Bytes f = 1 + uniform_index(rng, 64 * kMiB);
            inst.groups.push_back({n, f});
            const ExactBytes got = ethereal_max_load(inst);
            const ExactBytes want = fractional_lower_bound(inst);
            if (got != want) {
                if (bad++ == 0) {
                    first = "s=" + std::to_string(inst.uplinks) + " n=" + std::to_string(n) +
                            " f=" + std::to_string(f) + ": " + show(got) + " vs " + show(want);
                }
            }
        }
        out.push_back({"select_path max load equals spraying bound", bad == 0,
                       bad == 0 ? std::to_string(random_instances) + " random instances"
                                : std::to_string(bad) + " mismatches, first " + first});
    }

    {
        std::uint32_t bad = 0;
        std::uint32_t cases = 0;
        for (std::uint64_t s = 2; s <= 32; ++s) {
            for (std::uint64_t r = 1; r < s; ++r) {
                ++cases;
                const std::uint64_t g = std::gcd(r, s);
                const GroupSplit plan = plan_group(r, 1, s);
                if (verify_min_split(r, s) != s / g || plan.pieces_per_remainder != s / g ||
                    plan.extra_flows != r * (s - g) / g) {
                    ++bad;
                }
            }
        }
        out.push_back({"split factor is minimal and extra flows match", bad == 0,
                       std::to_string(cases) + " (r, s) pairs, " + std::to_string(bad) + " mismatches"});
    }

    {
        DemandInstance inst{4, {{5, 4 * kMiB}}};
        const ExactBytes unsplit = brute_force_unsplit(inst);
        const ExactBytes bound = fractional_lower_bound(inst);
        const ExactBytes eth = ethereal_max_load(inst);
        const bool ok = unsplit == to_exact(8 * kMiB) && bound == to_exact(5 * kMiB) && eth == bound;
        out.push_back({"five flows on four paths", ok,
                       "unsplit " + show(unsplit) + ", bound " + show(bound) + ", split " + show(eth)});
    }

    {
        Rng rng = make_rng(seed, 1);
        std::uint32_t bad = 0;
        std::uint32_t strict = 0;
        std::uint32_t total = 0;
        for (std::uint32_t i = 0; i < 200; ++i) {
            DemandInstance inst;
            inst.uplinks = static_cast<std::uint32_t>(1 + uniform_index(rng, 4));
            const std::uint64_t n = uniform_index(rng, 9);
            inst.groups.push_back({n, 1 + uniform_index(rng, 16)});
            const ExactBytes unsplit = brute_force_unsplit(inst);
            const ExactBytes bound = fractional_lower_bound(inst);
            ++total;
            if (unsplit < bound) ++bad;
            const bool divisible = n % inst.uplinks == 0;
            if (!divisible && !(unsplit > bound)) ++bad;
            if (!divisible) ++strict;
        }
        out.push_back({"unsplit optimum never beats spraying", bad == 0,
                       std::to_string(total) + " instances, " + std::to_string(strict) +
                           " strictly worse, " + std::to_string(bad) + " violations"});
    }
    return out;
}

void print_verify_table(std::ostream& out, const std::vector<VerifyCheck>& checks) {
    std::size_t width = 0;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    for (const auto& c : checks) {
        out << (c.pass ? "PASS  " : "FAIL  ") << c.name << std::string(width - c.name.size() + 2, ' ')
            << c.detail << '\n';
    }
}

}  // namespace ethereal
