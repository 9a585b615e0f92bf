#include "ethereal/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ethereal {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

std::string format_row(const RunRow& r) {
    std::string s;
    s += r.policy;
    s += ',' + r.collective;
    s += ',' + std::to_string(r.message_bytes);
    s += ',' + std::to_string(r.seed);
    s += ',' + fmt_double(r.cct_s);
    s += ',' + std::to_string(r.max_qps);
    s += ',' + fmt_double(r.max_link_util);
    s += ',' + fmt_double(r.mean_link_util);
    s += ',' + std::to_string(r.drops);
    s += ',' + std::to_string(r.retx_bytes);
    s += ',' + std::to_string(r.extra_flows);
    return s;
}

RunRow parse_row(std::string_view line) {
    const auto f = split_csv(line);
    if (f.size() != 11) {
        throw std::runtime_error("expected 11 columns, found " + std::to_string(f.size()));
    }
    RunRow r;
    r.policy = f[0];
    r.collective = f[1];
    r.message_bytes = std::stoull(f[2]);
    r.seed = std::stoull(f[3]);
    r.cct_s = std::stod(f[4]);
    r.max_qps = static_cast<std::uint32_t>(std::stoul(f[5]));
    r.max_link_util = std::stod(f[6]);
    r.mean_link_util = std::stod(f[7]);
    r.drops = std::stoull(f[8]);
    r.retx_bytes = std::stoull(f[9]);
    r.extra_flows = std::stoull(f[10]);
    return r;
}

void write_rows(std::ostream& out, const std::vector<RunRow>& rows) {
    out << kCsvHeader << '\n';
    for (const auto& r : rows) out << format_row(r) << '\n';
}

std::vector<RunRow> read_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) {
        throw std::runtime_error(path.string() + ": header does not match the results schema");
    }
    std::vector<RunRow> rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            rows.push_back(parse_row(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return rows;
}

CollectiveSchedule build_schedule(const ExperimentConfig& cfg, std::uint32_t ranks, Bytes message) {
    const auto& w = cfg.workload;
    switch (w.collective) {
        case CollectiveAlgorithm::DoubleBinaryTree:
            return gen_double_binary_tree(ranks, message, w.tree_chunks, cfg.transport.mtu);
        case CollectiveAlgorithm::Custom: {
            std::ifstream in(w.schedule_file);
            if (!in) throw std::runtime_error("cannot open schedule file " + w.schedule_file.string());
            return read_schedule(in);
        }
        default: return generate(w.collective, ranks, message, cfg.transport.mtu);
    }
}

SimConfig make_sim_config(const ExperimentConfig& cfg) {
    SimConfig s;
    s.transport = cfg.transport;
    s.fabric = cfg.fabric;
    s.lb = cfg.lb;
    s.failures = cfg.failures;
    s.limits = cfg.limits;
    s.placement = cfg.workload.placement;
    s.check_invariants = cfg.check_invariants;
    s.record_flows = cfg.outputs.flow_records;
    s.utilization_bucket = cfg.outputs.utilization_bucket;
    return s;
}

RunRow make_row(const PolicySpec& policy, const CollectiveSchedule& schedule, std::uint64_t seed,
                const MetricsReport& m) {
    RunRow r;
    r.policy = policy.name();
    r.collective = std::string(to_string(schedule.algorithm));
    r.message_bytes = schedule.message_bytes;
    r.seed = seed;
    r.cct_s = m.cct_s;
    r.max_qps = m.max_qps;
    r.max_link_util = m.max_link_util;
    r.mean_link_util = m.mean_link_util;
    r.drops = m.drops;
    r.retx_bytes = m.retx_bytes;
    r.extra_flows = m.extra_flows;
    return r;
}

namespace {

struct Job {
    PolicySpec policy;
    Bytes message = 0;
    std::uint64_t seed = 0;
};

std::string job_stem(const Job& j) {
    std::string p = j.policy.name();
    for (char& c : p) {
        if (c == ':') c = '_';
    }
    return p + "_" + std::to_string(j.message) + "_" + std::to_string(j.seed);
}

void write_side_outputs(const std::filesystem::path& dir, const Job& job, const Topology& topo,
                        const MetricsReport& m) {
    if (!m.utilization.empty()) {
        std::ofstream u(dir / ("utilization_" + job_stem(job) + ".csv"));
        u << "time_bucket,link,bytes\n";
        for (const auto& s : m.utilization) {
            const Link& l = topo.link(s.link);
            u << fmt_double(to_seconds(s.bucket_start)) << ',' << topo.node_name(l.id.from) << '-'
              << topo.node_name(l.id.to) << '#' << l.id.index << ',' << s.bytes << '\n';
        }
    }
    if (!m.flow_records.empty()) {
        std::ofstream f(dir / ("flows_" + job_stem(job) + ".csv"));
        f << "flow,step,src,dst,bytes,posted_s,delivered_s,acked_s,retx_bytes,subflows,paths\n";
        for (const auto& r : m.flow_records) {
            f << r.flow << ',' << r.step << ',' << r.src << ',' << r.dst << ',' << r.bytes << ','
              << fmt_double(to_seconds(r.posted)) << ',' << fmt_double(to_seconds(r.delivered)) << ','
              << fmt_double(to_seconds(r.acked)) << ',' << r.retx_bytes << ',' << r.subflows << ',';
            for (std::size_t i = 0; i < r.path_history.size(); ++i) {
                char buf[8];
                std::snprintf(buf, sizeof buf, "%04x", r.path_history[i].raw());
                f << (i ? ";" : "") << buf;
            }
            f << '\n';
        }
    }
}

std::string make_summary(const std::vector<RunRow>& rows, const std::vector<RunFailure>& failures,
                         const std::optional<std::string>& baseline) {
    std::ostringstream out;
    std::map<std::tuple<std::string, std::string, Bytes>, std::pair<double, std::size_t>> means;
    for (const auto& r : rows) {
        auto& m = means[{r.policy, r.collective, r.message_bytes}];
        m.first += r.cct_s;
        ++m.second;
    }
    out << "policy               collective           message_bytes   seeds  mean_cct_s\n";
    for (const auto& [key, m] : means) {
        char line[160];
        std::snprintf(line, sizeof line, "%-20s %-20s %13llu %7zu  %.9g\n", std::get<0>(key).c_str(),
                      std::get<1>(key).c_str(), static_cast<unsigned long long>(std::get<2>(key)),
                      m.second, m.first / static_cast<double>(m.second));
        out << line;
    }
    if (baseline) {
        out << '\n' << format_compare_table(compare(rows, *baseline), *baseline);
    }
    if (!failures.empty()) {
        out << '\n' << failures.size() << " run(s) failed:\n";
        for (const auto& f : failures) {
            out << "  " << f.policy << " size=" << f.message_bytes << " seed=" << f.seed << ": "
                << f.error << '\n';
        }
    }
    return out.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                std::optional<std::filesystem::path> output_dir) {
    ExperimentResult result;
    std::filesystem::path dir = cfg.output_dir;
    if (const char* env = std::getenv("ETHEREAL_OUTPUT_DIR"); env && *env) dir = env;
    if (output_dir) dir = *output_dir;
    std::filesystem::create_directories(dir);
    result.csv_path = dir / "results.csv";
    result.summary_path = dir / "summary.txt";

    const Topology topo = build_topology(cfg.topology);
    const std::uint32_t ranks = cfg.workload.ranks ? cfg.workload.ranks : topo.num_hosts();
    const SimConfig sim_cfg = make_sim_config(cfg);

    std::vector<Job> jobs;
    for (const auto& p : cfg.policies) {
        for (Bytes m : cfg.workload.message_sizes) {
            for (auto seed : cfg.seeds) jobs.push_back(Job{p, m, seed});
        }
    }

    std::ofstream csv(result.csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + result.csv_path.string());
    csv << kCsvHeader << '\n';
    csv.flush();

    std::vector<std::optional<RunRow>> rows(jobs.size());
    std::vector<std::optional<RunFailure>> failed(jobs.size());
    std::vector<bool> finished(jobs.size(), false);
    std::size_t flushed = 0;
    std::mutex mu;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            std::optional<RunRow> row;
            std::optional<RunFailure> failure;
            try {
                const CollectiveSchedule sched = build_schedule(cfg, ranks, job.message);
                const MetricsReport m = run(topo, sched, job.policy, sim_cfg, job.seed);
                if (!m.completed) throw std::runtime_error("simulation ended with incomplete flows");
                row = make_row(job.policy, sched, job.seed, m);
                write_side_outputs(dir, job, topo, m);
            } catch (const std::exception& e) {
                failure = RunFailure{job.policy.name(), job.message, job.seed, e.what()};
            }
            std::lock_guard lock(mu);
            rows[i] = std::move(row);
            failed[i] = std::move(failure);
            finished[i] = true;
            while (flushed < jobs.size() && finished[flushed]) {
                if (rows[flushed]) csv << format_row(*rows[flushed]) << '\n';
                ++flushed;
            }
            csv.flush();
        }
    };

    const std::uint32_t threads =
        std::max<std::uint32_t>(1, std::min<std::uint32_t>(cfg.workers, static_cast<std::uint32_t>(jobs.size())));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::uint32_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    csv.close();

    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (failed[i]) result.failures.push_back(*failed[i]);
    }
    // The summary is computed from the file so its numbers match the CSV exactly.
    result.rows = read_rows(result.csv_path);
    result.summary = make_summary(result.rows, result.failures, cfg.baseline);
    std::ofstream(result.summary_path, std::ios::trunc) << result.summary;
    return result;
}

std::vector<CompareRow> compare(const std::vector<RunRow>& rows, std::string_view baseline) {
    std::map<std::tuple<std::string, std::string, Bytes>, std::pair<double, std::size_t>> means;
    for (const auto& r : rows) {
        auto& m = means[{r.policy, r.collective, r.message_bytes}];
        m.first += r.cct_s;
        ++m.second;
    }
    std::vector<CompareRow> out;
    for (const auto& [key, m] : means) {
        const auto& [policy, collective, size] = key;
        auto base = means.find({std::string(baseline), collective, size});
        if (base == means.end()) continue;
        CompareRow c;
        c.policy = policy;
        c.collective = collective;
        c.message_bytes = size;
        c.seeds = m.second;
        c.policy_cct_s = m.first / static_cast<double>(m.second);
        c.baseline_cct_s = base->second.first / static_cast<double>(base->second.second);
        c.improvement = c.baseline_cct_s > 0 ? (c.baseline_cct_s - c.policy_cct_s) / c.baseline_cct_s : 0.0;
        out.push_back(c);
    }
    return out;
}

std::string format_compare_table(const std::vector<CompareRow>& table, std::string_view baseline) {
    std::ostringstream out;
    out << "improvement over " << baseline << " (positive = faster)\n";
    out << "policy               collective           message_bytes  baseline_cct_s   policy_cct_s  improvement\n";
    for (const auto& c : table) {
        char line[200];
        std::snprintf(line, sizeof line, "%-20s %-20s %13llu  %14.9g %14.9g  %+10.4f%%\n",
                      c.policy.c_str(), c.collective.c_str(),
                      static_cast<unsigned long long>(c.message_bytes), c.baseline_cct_s,
                      c.policy_cct_s, c.improvement * 100.0);
        out << line;
    }
    return out.str();
}

}  // namespace ethereal
