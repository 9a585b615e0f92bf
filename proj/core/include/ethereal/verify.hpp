#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ethereal {

struct VerifyCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Cross-checks the split-and-assign algorithm against the brute-force oracles.
std::vector<VerifyCheck> run_verify_suite(std::uint64_t seed = 1, std::uint32_t random_instances = 1000);

void print_verify_table(std::ostream& out, const std::vector<VerifyCheck>& checks);

}  // namespace ethereal
