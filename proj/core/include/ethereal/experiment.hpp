#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ethereal/config.hpp"
#include "ethereal/fabric.hpp"

namespace ethereal {

/// One CSV row: a single (policy, message size, seed) simulation.
struct RunRow {
    std::string policy;
    std::string collective;
    Bytes message_bytes = 0;
    std::uint64_t seed = 0;
    double cct_s = 0;
    std::uint32_t max_qps = 0;
    double max_link_util = 0;
    double mean_link_util = 0;
    std::uint64_t drops = 0;
    Bytes retx_bytes = 0;
    std::uint64_t extra_flows = 0;
};

inline constexpr std::string_view kCsvHeader =
    "policy,collective,message_bytes,seed,cct_s,max_qps,max_link_util,mean_link_util,drops,"
    "retx_bytes,extra_flows";

std::string format_row(const RunRow& row);
RunRow parse_row(std::string_view line);
void write_rows(std::ostream& out, const std::vector<RunRow>& rows);
/// Reads a results file; throws std::runtime_error when the header differs.
std::vector<RunRow> read_rows(const std::filesystem::path& path);

CollectiveSchedule build_schedule(const ExperimentConfig& cfg, std::uint32_t ranks, Bytes message);
SimConfig make_sim_config(const ExperimentConfig& cfg);
RunRow make_row(const PolicySpec& policy, const CollectiveSchedule& schedule, std::uint64_t seed,
                const MetricsReport& report);

struct RunFailure {
    std::string policy;
    Bytes message_bytes = 0;
    std::uint64_t seed = 0;
    std::string error;
};

struct ExperimentResult {
    std::vector<RunRow> rows;
    std::vector<RunFailure> failures;
    std::filesystem::path csv_path;
    std::filesystem::path summary_path;
    std::string summary;
};

/// Runs every (policy, size, seed) combination with up to cfg.workers threads. Rows are
/// written in that nested order as soon as each prefix finishes, so a failing run never
/// loses completed rows. `output_dir` overrides the configured directory.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                std::optional<std::filesystem::path> output_dir = std::nullopt);

struct CompareRow {
    std::string policy;
    std::string collective;
    Bytes message_bytes = 0;
    std::size_t seeds = 0;
    double baseline_cct_s = 0;
    double policy_cct_s = 0;
    /// (baseline - policy) / baseline.
    double improvement = 0;
};

/// Per (policy, collective, size): mean CCT over seeds against the baseline's mean.
std::vector<CompareRow> compare(const std::vector<RunRow>& rows, std::string_view baseline);
std::string format_compare_table(const std::vector<CompareRow>& table, std::string_view baseline);

}  // namespace ethereal
