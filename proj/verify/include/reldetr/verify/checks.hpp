#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reldetr/gradcheck.hpp"

namespace reldetr::verify {

struct CheckResult {
    int criterion = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Finite-difference check of relation encoder + decoder + one-to-one loss on
/// the gradcheck profile for a single seed. Stop-gradient values and the
/// matching are frozen after the analytic pass.
nk::GradcheckReport gradcheck_end_to_end(std::uint64_t seed, const nk::GradcheckOptions& options,
                                         bool with_hybrid = false);

CheckResult check_gradient_integrity(std::size_t seeds = 10, double time_limit_s = 60.0);
CheckResult check_hungarian_oracle(std::size_t matrices = 200, std::uint64_t seed = 2024);
CheckResult check_relation_invariance(std::size_t pairs = 1000, std::uint64_t seed = 3);
CheckResult check_shape_contract();
CheckResult check_constant_bias_neutrality(std::size_t steps = 50, std::uint64_t seed = 11);
CheckResult check_one_to_one_discipline();

struct McFixture {
    std::filesystem::path annotations;
    double pinned_mean = 0.0;
};

CheckResult check_mc_correctness(const std::optional<McFixture>& fixture = std::nullopt,
                                 std::size_t scenes = 500, std::uint64_t seed = 5);
CheckResult check_inference_purity(std::uint64_t seed = 13);
CheckResult check_toy_convergence(std::size_t steps = 200, std::uint64_t seed = 7,
                                  double max_ratio = 0.5, double time_limit_s = 300.0);

/// "gradcheck", "hungarian", "invariants" or "all"; throws InputError
/// otherwise.
std::vector<CheckResult> run_suite(const std::string& suite);

/// "PASS [3] relation invariance: ..." style line.
std::string format_result(const CheckResult& result);

}  // namespace reldetr::verify
