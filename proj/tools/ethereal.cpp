#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ethereal/collectives.hpp"
#include "ethereal/config.hpp"
#include "ethereal/experiment.hpp"
#include "ethereal/verify.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& output_dir, bool check_only) {
    const ethereal::ExperimentConfig cfg = ethereal::load_config(config_path);
    if (check_only) {
        std::cout << config_path << ": ok, "
                  << cfg.policies.size() * cfg.workload.message_sizes.size() * cfg.seeds.size()
                  << " runs\n";
        return 0;
    }
    std::optional<std::filesystem::path> out;
    if (!output_dir.empty()) out = output_dir;
    const auto result = ethereal::run_experiment(cfg, out);
    std::cout << result.summary;
    std::cout << "\nresults: " << result.csv_path.string() << '\n';
    return result.failures.empty() ? 0 : 3;
}

int cmd_verify(std::uint64_t seed, std::uint32_t instances) {
    const auto checks = ethereal::run_verify_suite(seed, instances);
    ethereal::print_verify_table(std::cout, checks);
    for (const auto& c : checks) {
        if (!c.pass) return 1;
    }
    return 0;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& baseline) {
    std::vector<ethereal::RunRow> rows;
    for (const auto& f : files) {
        auto part = ethereal::read_rows(f);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    const std::string base = ethereal::parse_policy(baseline).name();
    std::cout << ethereal::format_compare_table(ethereal::compare(rows, base), base);
    return 0;
}

int cmd_schedule(const std::string& collective, std::uint32_t ranks, const std::string& size,
                 std::uint32_t chunks) {
    auto algo = ethereal::parse_collective(collective);
    if (!algo || *algo == ethereal::CollectiveAlgorithm::Custom) {
        std::cerr << "unknown collective '" << collective << "'\n";
        return 2;
    }
    const ethereal::Bytes bytes = ethereal::parse_size(size);
    const auto sched = *algo == ethereal::CollectiveAlgorithm::DoubleBinaryTree
                           ? ethereal::gen_double_binary_tree(ranks, bytes, chunks)
                           : ethereal::generate(*algo, ranks, bytes);
    ethereal::write_schedule(std::cout, sched);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Packet-level CLOS fabric simulator for collective load balancing"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    auto* run = app.add_subcommand("run", "Run every (policy, size, seed) in an experiment file");
    run->add_option("config", config_path, "YAML experiment file")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--output-dir", output_dir, "Override the output directory");
    bool check_only = false;
    run->add_flag("--check", check_only, "Validate the file and exit without simulating");

    std::uint64_t verify_seed = 1;
    std::uint32_t verify_instances = 1000;
    auto* verify = app.add_subcommand("verify", "Check the load balancer against brute-force oracles");
    verify->add_option("--seed", verify_seed, "Seed for random instances");
    verify->add_option("--instances", verify_instances, "Number of random instances");

    std::vector<std::string> csv_files;
    std::string baseline;
    auto* cmp = app.add_subcommand("compare", "Relative CCT improvement of each policy over a baseline");
    cmp->add_option("csv", csv_files, "Result files")->required()->check(CLI::ExistingFile);
    cmp->add_option("--baseline", baseline, "Baseline policy name")->required();

    std::string collective = "all_to_all";
    std::uint32_t ranks = 8;
    std::string size = "8MB";
    std::uint32_t chunks = 4;
    auto* sched = app.add_subcommand("schedule", "Print a collective schedule in text form");
    sched->add_option("collective", collective, "Collective name")->required();
    sched->add_option("--ranks", ranks, "Number of ranks");
    sched->add_option("--size", size, "Message size, e.g. 8MB");
    sched->add_option("--chunks", chunks, "Pipeline chunks per tree (double_binary_tree)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config_path, output_dir, check_only);
        if (*verify) return cmd_verify(verify_seed, verify_instances);
        if (*cmp) return cmd_compare(csv_files, baseline);
        if (*sched) return cmd_schedule(collective, ranks, size, chunks);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
