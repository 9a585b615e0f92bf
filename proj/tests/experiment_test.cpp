#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "ethereal/config.hpp"
#include "ethereal/experiment.hpp"

using namespace ethereal;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    fs::path p = fs::temp_directory_path() /
                 ("ethereal_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kSmall = R"(topology:
  kind: leaf_spine
  leaves: 2
  spines: 2
  hosts_per_leaf: 2
  link_gbps: 100
workload:
  collective: all_to_all
  message_sizes: [64KB, 128KB]
policies: [ethereal, ecmp]
seeds: [1, 2]
baseline: ecmp
)";

RunRow row(std::string policy, Bytes size, std::uint64_t seed, double cct) {
    RunRow r;
    r.policy = std::move(policy);
    r.collective = "ring";
    r.message_bytes = size;
    r.seed = seed;
    r.cct_s = cct;
    return r;
}

}  // namespace

TEST(ParseSize, Units) {
    EXPECT_EQ(parse_size("4096"), 4096u);
    EXPECT_EQ(parse_size("64KB"), 64u * 1024);
    EXPECT_EQ(parse_size("8MB"), 8u * kMiB);
    EXPECT_EQ(parse_size("8MiB"), 8u * kMiB);
    EXPECT_EQ(parse_size("1.5GiB"), 3u * 512 * kMiB);
    EXPECT_THROW(parse_size("MB"), std::invalid_argument);
    EXPECT_THROW(parse_size("3furlongs"), std::invalid_argument);
    EXPECT_THROW(parse_size("0.5"), std::invalid_argument);
}

TEST(ParseLinkName, LeafSpineNames) {
    const auto topo = build_leaf_spine(2, 2, 1, 100e9, 500e-9, 2);
    const LinkId id = parse_link_name(topo, "leaf1-spine0#1");
    EXPECT_EQ(id.from, topo.leaf_node(1));
    EXPECT_EQ(id.to, topo.spine_node(0));
    EXPECT_EQ(id.index, 1);
    EXPECT_THROW(parse_link_name(topo, "leaf1-spine0#2"), std::invalid_argument);
    EXPECT_THROW(parse_link_name(topo, "leaf9-spine0"), std::invalid_argument);
    EXPECT_THROW(parse_link_name(topo, "leaf1spine0"), std::invalid_argument);
}

TEST(Config, ParsesFullExample) {
    const auto cfg = parse_config_text(R"(topology:
  kind: fat_tree
  leaves: 8
  spines: 8
  cores: 4
  hosts_per_leaf: 8
  parallel_links: 2
  link_gbps: 400
  link_latency_ns: 500
workload:
  collective: recursive_doubling
  message_sizes: [4MB, 8MB]
policies: [ethereal, ecmp, spray, reps, "mprdma:8"]
lb: {interception_window_us: 10, jitter_us: 5, bad_path_reset_ms: 250}
transport: {mtu: 4096, dctcp_g: 0.0625, timeout_ms: 1, ecn_k_bdp: 0.2}
fabric: {switch_buffer: 64MB, pfc_alpha: 1, routing_convergence_ms: 100}
failures:
  - {at_ms: 1, link: leaf0-spine1, action: fail}
  - {at_ms: 5, link: leaf0-spine1, action: recover}
seeds: [1, 2, 3]
workers: 2
baseline: ecmp
outputs: {utilization_bucket_us: 100, flow_records: true}
)");
    EXPECT_EQ(cfg.topology.tier, Tier::FatTree);
    EXPECT_EQ(cfg.topology.parallel_links, 2u);
    EXPECT_DOUBLE_EQ(cfg.topology.link_bps, 400e9);
    EXPECT_EQ(cfg.workload.collective, CollectiveAlgorithm::RecursiveDoubling);
    EXPECT_EQ(cfg.workload.message_sizes, (std::vector<Bytes>{4 * kMiB, 8 * kMiB}));
    ASSERT_EQ(cfg.policies.size(), 5u);
    EXPECT_EQ(cfg.policies[4].splits, 8u);
    EXPECT_EQ(cfg.lb.bad_path_reset, from_ms(250));
    EXPECT_EQ(cfg.transport.timeout, from_ms(1));
    EXPECT_EQ(cfg.fabric.switch_buffer, 64 * kMiB);
    ASSERT_EQ(cfg.failures.size(), 2u);
    EXPECT_EQ(cfg.failures[1].action, FailureKind::Recover);
    EXPECT_EQ(cfg.failures[0].time, from_ms(1));
    EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
    EXPECT_EQ(cfg.workers, 2u);
    EXPECT_EQ(cfg.baseline, "ecmp");
    EXPECT_TRUE(cfg.outputs.flow_records);
    EXPECT_EQ(cfg.outputs.utilization_bucket, from_us(100));
}

TEST(Config, UnknownKeyReportsPosition) {
    try {
        parse_config_text("topology:\n  leaves: 2\n  spinez: 2\n", "exp.yaml");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.column(), 3);
        EXPECT_NE(std::string(e.what()).find("exp.yaml:3:3"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("spinez"), std::string::npos);
    }
}

TEST(Config, RejectsBadValues) {
    EXPECT_THROW(parse_config_text("policies: [ethereal, drill]\n"), ConfigError);
    EXPECT_THROW(parse_config_text("workload: {collective: butterfly}\n"), ConfigError);
    EXPECT_THROW(parse_config_text("topology: {leaves: 0}\n"), ConfigError);
    EXPECT_THROW(parse_config_text("transport: {dctcp_g: 2}\n"), ConfigError);
    EXPECT_THROW(parse_config_text("failures: [{at_ms: 1, link: leaf0-spine9}]\n"), ConfigError);
    EXPECT_THROW(parse_config_text("workload: {ranks: 99}\n"), ConfigError);
    EXPECT_THROW(parse_config_text("seeds: 3\n"), ConfigError);
    EXPECT_THROW(parse_config_text("topology: [1, 2\n"), ConfigError);
}

TEST(Csv, RowRoundTrip) {
    RunRow r = row("mprdma:8", 8 * kMiB, 3, 0.00123456789);
    r.max_qps = 17;
    r.max_link_util = 0.75;
    r.mean_link_util = 0.5;
    r.drops = 2;
    r.retx_bytes = 4096;
    r.extra_flows = 7;
    const RunRow back = parse_row(format_row(r));
    EXPECT_EQ(format_row(back), format_row(r));
    EXPECT_THROW(parse_row("a,b,c"), std::runtime_error);
}

TEST(Compare, Arithmetic) {
    const auto table = compare({row("ecmp", 1, 1, 0.010), row("ethereal", 1, 1, 0.007)}, "ecmp");
    ASSERT_EQ(table.size(), 2u);
    for (const auto& c : table) {
        if (c.policy == "ethereal") {
            EXPECT_NEAR(c.improvement, 0.30, 1e-12);
        } else {
            EXPECT_EQ(c.improvement, 0.0);
        }
    }
}

TEST(Compare, IdenticalInputsGiveZero) {
    std::vector<RunRow> rows;
    for (const char* p : {"ecmp", "spray", "ethereal"}) {
        for (std::uint64_t s = 1; s <= 3; ++s) rows.push_back(row(p, 4096, s, 0.002 + 0.001 * s));
    }
    for (const auto& c : compare(rows, "ecmp")) EXPECT_EQ(c.improvement, 0.0) << c.policy;
}

TEST(Compare, MeansOverSeeds) {
    const auto table = compare({row("ecmp", 1, 1, 0.010), row("ecmp", 1, 2, 0.030),
                                row("reps", 1, 1, 0.010), row("reps", 1, 2, 0.010)},
                               "ecmp");
    for (const auto& c : table) {
        if (c.policy == "reps") {
            EXPECT_EQ(c.seeds, 2u);
            EXPECT_NEAR(c.improvement, 0.5, 1e-12);
        }
    }
}

TEST(Compare, RejectsMismatchedSchema) {
    const fs::path dir = scratch_dir();
    fs::create_directories(dir);
    std::ofstream(dir / "other.csv") << "policy,cct\nethereal,1\n";
    EXPECT_THROW(read_rows(dir / "other.csv"), std::runtime_error);
    fs::remove_all(dir);
}

TEST(RunExperiment, EmptyWorkloadWritesHeaderOnly) {
    const fs::path dir = scratch_dir();
    auto cfg = parse_config_text("topology: {leaves: 2, spines: 2, hosts_per_leaf: 1}\npolicies: [ethereal]\n");
    const auto result = run_experiment(cfg, dir);
    EXPECT_TRUE(result.rows.empty());
    EXPECT_EQ(slurp(result.csv_path), std::string(kCsvHeader) + "\n");
    fs::remove_all(dir);
}

TEST(RunExperiment, OneRowPerPolicySizeSeed) {
    const fs::path dir = scratch_dir();
    auto cfg = parse_config_text(R"(topology: {leaves: 2, spines: 2, hosts_per_leaf: 2}
workload:
  collective: ring
  message_sizes: [4KB, 8KB, 16KB, 32KB, 64KB, 128KB, 256KB]
policies: [ethereal, ecmp, spray, reps, "mprdma:4"]
seeds: [1]
)");
    const auto result = run_experiment(cfg, dir);
    ASSERT_EQ(result.rows.size(), 35u);
    EXPECT_TRUE(result.failures.empty());
    EXPECT_EQ(result.rows.front().policy, "ethereal");
    EXPECT_EQ(result.rows.back().policy, "mprdma:4");
    EXPECT_EQ(result.rows.back().message_bytes, 256u * 1024);
    fs::remove_all(dir);
}

TEST(RunExperiment, ByteStableAcrossRunsAndWorkers) {
    const fs::path dir = scratch_dir();
    auto cfg = parse_config_text(kSmall);
    const auto a = run_experiment(cfg, dir / "a");
    cfg.workers = 3;
    const auto b = run_experiment(cfg, dir / "b");
    EXPECT_EQ(a.rows.size(), 8u);
    EXPECT_EQ(slurp(a.csv_path), slurp(b.csv_path));
    EXPECT_EQ(slurp(a.summary_path), slurp(b.summary_path));
    fs::remove_all(dir);
}

TEST(RunExperiment, SummaryRecomputesFromCsv) {
    const fs::path dir = scratch_dir();
    const auto result = run_experiment(parse_config_text(kSmall), dir);
    const auto rows = read_rows(result.csv_path);
    const std::string table = format_compare_table(compare(rows, "ecmp"), "ecmp");
    EXPECT_NE(result.summary.find(table), std::string::npos);
    fs::remove_all(dir);
}

TEST(RunExperiment, FailedRunsKeepCompletedRows) {
    const fs::path dir = scratch_dir();
    auto cfg = parse_config_text(kSmall);
    // Enough events for the small size only.
    cfg.limits.max_events = 6000;
    cfg.workload.message_sizes = {4096, 4 * kMiB};
    cfg.policies = {parse_policy("ecmp")};
    cfg.seeds = {1};
    const auto result = run_experiment(cfg, dir);
    ASSERT_EQ(result.rows.size(), 1u);
    EXPECT_EQ(result.rows[0].message_bytes, 4096u);
    ASSERT_EQ(result.failures.size(), 1u);
    EXPECT_NE(result.failures[0].error.find("event limit"), std::string::npos);
    EXPECT_NE(result.summary.find("1 run(s) failed"), std::string::npos);
    fs::remove_all(dir);
}

TEST(RunExperiment, EnvironmentOverridesOutputDir) {
    const fs::path dir = scratch_dir();
    auto cfg = parse_config_text(kSmall);
    cfg.policies = {parse_policy("ethereal")};
    cfg.workload.message_sizes = {4096};
    cfg.output_dir = dir / "from_config";
    ::setenv("ETHEREAL_OUTPUT_DIR", (dir / "from_env").c_str(), 1);
    const auto r1 = run_experiment(cfg);
    const auto r2 = run_experiment(cfg, dir / "from_arg");
    ::unsetenv("ETHEREAL_OUTPUT_DIR");
    EXPECT_EQ(r1.csv_path, dir / "from_env" / "results.csv");
    EXPECT_EQ(r2.csv_path, dir / "from_arg" / "results.csv");
    EXPECT_FALSE(fs::exists(dir / "from_config"));
    fs::remove_all(dir);
}

TEST(RunExperiment, SideOutputs) {
    const fs::path dir = scratch_dir();
    auto cfg = parse_config_text(kSmall);
    cfg.policies = {parse_policy("ethereal")};
    cfg.workload.message_sizes = {64 * 1024};
    cfg.seeds = {1};
    cfg.outputs.flow_records = true;
    cfg.outputs.utilization_bucket = from_us(10);
    run_experiment(cfg, dir);
    const std::string flows = slurp(dir / "flows_ethereal_65536_1.csv");
    EXPECT_EQ(flows.rfind("flow,step,src,dst,bytes,posted_s,delivered_s,acked_s", 0), 0u);
    const std::string util = slurp(dir / "utilization_ethereal_65536_1.csv");
    EXPECT_EQ(util.rfind("time_bucket,link,bytes\n", 0), 0u);
    EXPECT_NE(util.find("leaf0-spine"), std::string::npos);
    fs::remove_all(dir);
}
