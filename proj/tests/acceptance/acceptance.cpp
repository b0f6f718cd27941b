#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "reldetr/verify/checks.hpp"

namespace verify = reldetr::verify;

int main() {
    std::ifstream expected(RELDETR_FIXTURE_DIR "/coco_fixture_expected.json");
    const auto pinned = nlohmann::json::parse(expected);
    const verify::McFixture fixture{RELDETR_FIXTURE_DIR "/coco_fixture.json", pinned.at("mean_mc").get<double>()};

    std::vector<verify::CheckResult> results;
    results.push_back(verify::check_gradient_integrity(10, 60.0));
    results.push_back(verify::check_hungarian_oracle(200, 2024));
    results.push_back(verify::check_relation_invariance(1000, 3));
    results.push_back(verify::check_shape_contract());
    results.push_back(verify::check_constant_bias_neutrality(50, 11));
    results.push_back(verify::check_one_to_one_discipline());
    results.push_back(verify::check_mc_correctness(fixture, 500, 5));
    results.push_back(verify::check_inference_purity(13));
    results.push_back(verify::check_toy_convergence(200, 7, 0.5, 300.0));

    std::size_t failed = 0;
    for (const auto& r : results) {
        std::cout << verify::format_result(r) << std::endl;
        if (!r.passed) ++failed;
    }
    std::cout << (results.size() - failed) << " of " << results.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
