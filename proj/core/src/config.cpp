#include "ethereal/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace ethereal {

ConfigError::ConfigError(const std::string& origin, int line, int column, const std::string& message)
    : std::runtime_error(origin + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " +
                         message),
      line_(line),
      column_(column) {}

Bytes parse_size(std::string_view text) {
    std::string s(text);
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }),
            s.end());
    std::size_t split = 0;
    while (split < s.size() && (std::isdigit(static_cast<unsigned char>(s[split])) || s[split] == '.')) {
        ++split;
    }
    if (split == 0) throw std::invalid_argument("size '" + std::string(text) + "' has no number");
    const double value = std::stod(s.substr(0, split));
    std::string unit = s.substr(split);
    std::transform(unit.begin(), unit.end(), unit.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    double mult = 1;
    if (unit.empty() || unit == "b") {
        mult = 1;
    } else if (unit == "kb" || unit == "kib" || unit == "k") {
        mult = static_cast<double>(kKiB);
    } else if (unit == "mb" || unit == "mib" || unit == "m") {
        mult = static_cast<double>(kMiB);
    } else if (unit == "gb" || unit == "gib" || unit == "g") {
        mult = static_cast<double>(kMiB) * 1024.0;
    } else {
        throw std::invalid_argument("unknown size unit '" + unit + "'");
    }
    const double bytes = value * mult;
    if (bytes < 0 || bytes != std::floor(bytes)) {
        throw std::invalid_argument("size '" + std::string(text) + "' is not a whole number of bytes");
    }
    return static_cast<Bytes>(bytes);
}

LinkId parse_link_name(const Topology& topo, std::string_view text) {
    std::string_view body = text;
    std::uint16_t ordinal = 0;
    if (auto hash = text.find('#'); hash != std::string_view::npos) {
        body = text.substr(0, hash);
        auto digits = text.substr(hash + 1);
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), ordinal);
        if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
            throw std::invalid_argument("bad parallel-link ordinal in '" + std::string(text) + "'");
        }
    }
    const auto dash = body.find('-');
    if (dash == std::string_view::npos) {
        throw std::invalid_argument("link '" + std::string(text) + "' must look like leaf0-spine1");
    }
    auto a = topo.parse_node(body.substr(0, dash));
    auto b = topo.parse_node(body.substr(dash + 1));
    if (!a || !b) throw std::invalid_argument("link '" + std::string(text) + "' names an unknown node");
    LinkId id{*a, *b, ordinal};
    if (!topo.find_link(id)) {
        throw std::invalid_argument("link '" + std::string(text) + "' does not exist in this topology");
    }
    return id;
}

namespace {

class Parser {
public:
    explicit Parser(std::string origin) : origin_(std::move(origin)) {}

    [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
        const auto m = n.Mark();
        if (m.is_null()) throw ConfigError(origin_ + ": " + msg);
        throw ConfigError(origin_, m.line + 1, m.column + 1, msg);
    }

    void expect_map(const YAML::Node& n, const std::string& where) const {
        if (!n.IsMap()) fail(n, "'" + where + "' must be a mapping");
    }

    void check_keys(const YAML::Node& n, const std::string& where,
                    std::initializer_list<std::string_view> allowed) const {
        expect_map(n, where);
        for (const auto& kv : n) {
            const auto key = kv.first.as<std::string>();
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                std::string list;
                for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
                fail(kv.first, "unknown key '" + key + "' in '" + where + "' (allowed: " + list + ")");
            }
        }
    }

    template <typename T>
    T scalar(const YAML::Node& n, const std::string& what) const {
        if (!n.IsScalar()) fail(n, "'" + what + "' must be a scalar");
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            fail(n, "'" + what + "' has an invalid value '" + n.Scalar() + "'");
        }
    }

    template <typename T>
    void read(const YAML::Node& parent, const char* key, T& out, const std::string& where) const {
        if (auto n = parent[key]) out = scalar<T>(n, where + "." + key);
    }

    std::uint32_t count(const YAML::Node& n, const std::string& what) const {
        const auto v = scalar<long long>(n, what);
        if (v < 0 || v > 1'000'000) fail(n, "'" + what + "' is out of range");
        return static_cast<std::uint32_t>(v);
    }

    void read_count(const YAML::Node& parent, const char* key, std::uint32_t& out,
                    const std::string& where) const {
        if (auto n = parent[key]) out = count(n, where + "." + key);
    }

    double positive(const YAML::Node& n, const std::string& what) const {
        const auto v = scalar<double>(n, what);
        if (!(v > 0)) fail(n, "'" + what + "' must be positive");
        return v;
    }

    double non_negative(const YAML::Node& n, const std::string& what) const {
        const auto v = scalar<double>(n, what);
        if (!(v >= 0)) fail(n, "'" + what + "' must not be negative");
        return v;
    }

    Bytes size(const YAML::Node& n, const std::string& what) const {
        if (!n.IsScalar()) fail(n, "'" + what + "' must be a size");
        try {
            return parse_size(n.Scalar());
        } catch (const std::exception& e) {
            fail(n, "'" + what + "': " + e.what());
        }
    }

    void topology(const YAML::Node& n, TopologyConfig& t) const {
        check_keys(n, "topology", {"kind", "leaves", "spines", "cores", "hosts_per_leaf",
                                   "parallel_links", "pods", "link_gbps", "link_latency_ns"});
        if (auto k = n["kind"]) {
            const auto kind = scalar<std::string>(k, "topology.kind");
            if (kind == "leaf_spine") {
                t.tier = Tier::LeafSpine;
            } else if (kind == "fat_tree") {
                t.tier = Tier::FatTree;
            } else {
                fail(k, "topology.kind must be leaf_spine or fat_tree");
            }
        }
        read_count(n, "leaves", t.leaves, "topology");
        read_count(n, "spines", t.spines, "topology");
        read_count(n, "cores", t.cores, "topology");
        read_count(n, "hosts_per_leaf", t.hosts_per_leaf, "topology");
        read_count(n, "parallel_links", t.parallel_links, "topology");
        read_count(n, "pods", t.pods, "topology");
        if (auto v = n["link_gbps"]) t.link_bps = positive(v, "topology.link_gbps") * 1e9;
        if (auto v = n["link_latency_ns"]) {
            t.link_latency_s = non_negative(v, "topology.link_latency_ns") * 1e-9;
        }
    }

    void workload(const YAML::Node& n, WorkloadConfig& w) const {
        check_keys(n, "workload", {"collective", "ranks", "message_sizes", "tree_chunks",
                                   "placement", "schedule_file"});
        if (auto c = n["collective"]) {
            const auto name = scalar<std::string>(c, "workload.collective");
            auto algo = parse_collective(name);
            if (!algo) fail(c, "unknown collective '" + name + "'");
            w.collective = *algo;
        }
        read_count(n, "ranks", w.ranks, "workload");
        read_count(n, "tree_chunks", w.tree_chunks, "workload");
        if (auto sizes = n["message_sizes"]) {
            if (!sizes.IsSequence()) fail(sizes, "workload.message_sizes must be a list");
            for (const auto& s : sizes) {
                const Bytes b = size(s, "workload.message_sizes");
                if (b == 0) fail(s, "message sizes must be positive");
                w.message_sizes.push_back(b);
            }
        }
        if (auto p = n["placement"]) {
            if (!p.IsSequence()) fail(p, "workload.placement must be a list of host ids");
            for (const auto& h : p) w.placement.push_back(count(h, "workload.placement"));
        }
        if (auto f = n["schedule_file"]) w.schedule_file = scalar<std::string>(f, "workload.schedule_file");
    }

    void policies(const YAML::Node& n, std::vector<PolicySpec>& out) const {
        if (!n.IsSequence()) fail(n, "'policies' must be a list");
        for (const auto& p : n) {
            const auto name = scalar<std::string>(p, "policies");
            try {
                out.push_back(parse_policy(name));
            } catch (const std::invalid_argument& e) {
                fail(p, e.what());
            }
        }
    }

    void lb(const YAML::Node& n, LbConfig& c) const {
        check_keys(n, "lb", {"interception_window_us", "jitter_us", "flush_on_post",
                             "bad_path_reset_ms", "ecmp_seed", "reps_cache_limit"});
        if (auto v = n["interception_window_us"]) {
            c.interceptor.window = from_us(non_negative(v, "lb.interception_window_us"));
        }
        if (auto v = n["jitter_us"]) c.interceptor.max_jitter_s = non_negative(v, "lb.jitter_us") * 1e-6;
        read(n, "flush_on_post", c.interceptor.flush_on_post, "lb");
        if (auto v = n["bad_path_reset_ms"]) {
            c.bad_path_reset = from_ms(non_negative(v, "lb.bad_path_reset_ms"));
        }
        read(n, "ecmp_seed", c.ecmp_seed, "lb");
        if (auto v = n["reps_cache_limit"]) c.reps_cache_limit = count(v, "lb.reps_cache_limit");
    }

    void transport(const YAML::Node& n, TransportConfig& t) const {
        check_keys(n, "transport", {"mtu", "data_header_bytes", "ack_bytes", "ack_every", "dctcp_g", "ecn_k_bdp",
                                    "ecn_k_bytes", "initial_cwnd_bdp", "timeout_ms",
                                    "reorder_capacity_bdp", "reset_cwnd_on_reroute"});
        if (auto v = n["mtu"]) {
            t.mtu = size(v, "transport.mtu");
            if (t.mtu == 0) fail(v, "transport.mtu must be positive");
        }
        if (auto v = n["data_header_bytes"]) t.data_header_bytes = size(v, "transport.data_header_bytes");
        if (auto v = n["ack_bytes"]) {
            t.ack_bytes = size(v, "transport.ack_bytes");
            if (t.ack_bytes == 0) fail(v, "transport.ack_bytes must be positive");
        }
        if (auto v = n["ack_every"]) {
            t.ack_every = static_cast<std::uint32_t>(count(v, "transport.ack_every"));
            if (t.ack_every == 0) fail(v, "transport.ack_every must be positive");
        }
        if (auto v = n["dctcp_g"]) {
            t.dctcp_g = positive(v, "transport.dctcp_g");
            if (t.dctcp_g > 1) fail(v, "transport.dctcp_g must be at most 1");
        }
        if (auto v = n["ecn_k_bdp"]) t.ecn_k_bdp = non_negative(v, "transport.ecn_k_bdp");
        if (auto v = n["ecn_k_bytes"]) t.ecn_k_bytes = size(v, "transport.ecn_k_bytes");
        if (auto v = n["initial_cwnd_bdp"]) t.initial_cwnd_bdp = non_negative(v, "transport.initial_cwnd_bdp");
        if (auto v = n["timeout_ms"]) t.timeout = from_ms(positive(v, "transport.timeout_ms"));
        if (auto v = n["reorder_capacity_bdp"]) {
            t.reorder_capacity_bdp = non_negative(v, "transport.reorder_capacity_bdp");
        }
        read(n, "reset_cwnd_on_reroute", t.reset_cwnd_on_reroute, "transport");
    }

    void fabric(const YAML::Node& n, FabricConfig& f) const {
        check_keys(n, "fabric", {"switch_buffer", "pfc", "pfc_alpha", "switch_delay_ns",
                                 "routing_convergence_ms"});
        if (auto v = n["switch_buffer"]) f.switch_buffer = size(v, "fabric.switch_buffer");
        read(n, "pfc", f.pfc, "fabric");
        if (auto v = n["pfc_alpha"]) f.pfc_alpha = positive(v, "fabric.pfc_alpha");
        if (auto v = n["switch_delay_ns"]) f.switch_delay = from_ns(non_negative(v, "fabric.switch_delay_ns"));
        if (auto v = n["routing_convergence_ms"]) {
            f.routing_convergence = from_ms(non_negative(v, "fabric.routing_convergence_ms"));
        }
    }

    void failures(const YAML::Node& n, const Topology& topo, std::vector<FailureAction>& out) const {
        if (!n.IsSequence()) fail(n, "'failures' must be a list");
        for (const auto& f : n) {
            check_keys(f, "failures[]", {"at_ms", "link", "action"});
            FailureAction a;
            if (!f["at_ms"]) fail(f, "failure entry needs 'at_ms'");
            if (!f["link"]) fail(f, "failure entry needs 'link'");
            a.time = from_ms(non_negative(f["at_ms"], "failures.at_ms"));
            try {
                a.link = parse_link_name(topo, scalar<std::string>(f["link"], "failures.link"));
            } catch (const std::invalid_argument& e) {
                fail(f["link"], e.what());
            }
            const auto kind = topo.node_kind(a.link.from);
            if (kind == NodeKind::Host || topo.node_kind(a.link.to) == NodeKind::Host) {
                fail(f["link"], "only switch-to-switch links can fail");
            }
            if (auto act = f["action"]) {
                const auto s = scalar<std::string>(act, "failures.action");
                if (s == "fail") {
                    a.action = FailureKind::Fail;
                } else if (s == "recover") {
                    a.action = FailureKind::Recover;
                } else {
                    fail(act, "failure action must be fail or recover");
                }
            }
            out.push_back(a);
        }
    }

    void limits(const YAML::Node& n, SimLimits& l) const {
        check_keys(n, "limits", {"max_events", "max_sim_seconds", "max_wall_seconds"});
        read(n, "max_events", l.max_events, "limits");
        if (auto v = n["max_sim_seconds"]) l.max_sim_time = from_seconds(positive(v, "limits.max_sim_seconds"));
        if (auto v = n["max_wall_seconds"]) l.max_wall_seconds = positive(v, "limits.max_wall_seconds");
    }

    void outputs(const YAML::Node& n, OutputConfig& o) const {
        check_keys(n, "outputs", {"utilization_bucket_us", "flow_records"});
        if (auto v = n["utilization_bucket_us"]) {
            o.utilization_bucket = from_us(non_negative(v, "outputs.utilization_bucket_us"));
        }
        read(n, "flow_records", o.flow_records, "outputs");
    }

    ExperimentConfig parse(const YAML::Node& root) const {
        ExperimentConfig c;
        if (root.IsNull()) return c;
        check_keys(root, "<root>", {"topology", "workload", "policies", "lb", "transport", "fabric",
                                    "failures", "limits", "seeds", "output_dir", "workers",
                                    "baseline", "outputs", "check_invariants"});
        if (auto n = root["topology"]) topology(n, c.topology);
        Topology topo = [&] {
            try {
                return build_topology(c.topology);
            } catch (const TopologyError& e) {
                fail(root["topology"] ? root["topology"] : root, e.what());
            }
        }();
        if (auto n = root["workload"]) workload(n, c.workload);
        if (c.workload.ranks > topo.num_hosts()) {
            fail(root["workload"]["ranks"], "more ranks than hosts in the topology");
        }
        for (NodeId h : c.workload.placement) {
            if (h >= topo.num_hosts()) fail(root["workload"]["placement"], "placement names a missing host");
        }
        if (!c.workload.placement.empty()) {
            auto sorted = c.workload.placement;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
                fail(root["workload"]["placement"], "placement maps two ranks to one host");
            }
        }
        if (auto n = root["policies"]) policies(n, c.policies);
        if (auto n = root["lb"]) lb(n, c.lb);
        if (auto n = root["transport"]) transport(n, c.transport);
        if (auto n = root["fabric"]) fabric(n, c.fabric);
        if (auto n = root["failures"]) failures(n, topo, c.failures);
        if (auto n = root["limits"]) limits(n, c.limits);
        if (auto n = root["seeds"]) {
            if (!n.IsSequence()) fail(n, "'seeds' must be a list");
            c.seeds.clear();
            for (const auto& s : n) c.seeds.push_back(scalar<std::uint64_t>(s, "seeds"));
        }
        if (auto n = root["output_dir"]) c.output_dir = scalar<std::string>(n, "output_dir");
        if (auto n = root["workers"]) {
            c.workers = count(n, "workers");
            if (c.workers == 0) fail(n, "'workers' must be at least 1");
        }
        if (auto n = root["baseline"]) {
            const auto name = scalar<std::string>(n, "baseline");
            try {
                c.baseline = parse_policy(name).name();
            } catch (const std::invalid_argument& e) {
                fail(n, e.what());
            }
        }
        if (auto n = root["outputs"]) outputs(n, c.outputs);
        read(root, "check_invariants", c.check_invariants, "<root>");
        return c;
    }

private:
    std::string origin_;
};

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(origin, e.mark.line + 1, e.mark.column + 1, e.msg);
    }
    return Parser(origin).parse(root);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_config_text(ss.str(), path.string());
    if (!cfg.workload.schedule_file.empty() && cfg.workload.schedule_file.is_relative()) {
        cfg.workload.schedule_file = path.parent_path() / cfg.workload.schedule_file;
    }
    return cfg;
}

Topology build_topology(const TopologyConfig& cfg) {
    if (cfg.tier == Tier::LeafSpine) {
        return build_leaf_spine(cfg.leaves, cfg.spines, cfg.hosts_per_leaf, cfg.link_bps,
                                cfg.link_latency_s, cfg.parallel_links);
    }
    return build_fat_tree(cfg.leaves, cfg.spines, cfg.cores, cfg.hosts_per_leaf, cfg.parallel_links,
                          cfg.link_bps, cfg.link_latency_s, cfg.pods);
}

}  // namespace ethereal
