#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "reldetr/cli.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "reldetr");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = reldetr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "reldetr_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path write(const std::string& name, const std::string& text) {
    const auto p = scratch(name);
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST(CliMc, FixtureMean) {
    const auto r = run({"mc", testing_support::fixture_path("coco_fixture.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("mean 0.696884813167"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("images 80 of 100 (20 skipped)"), std::string::npos) << r.out;
}

TEST(CliMc, OutputsAreIndependentOfJobs) {
    const auto fixture = testing_support::fixture_path("coco_fixture.json");
    const auto csv1 = scratch("one.csv"), csv8 = scratch("eight.csv");
    const auto sum1 = scratch("one.json"), sum8 = scratch("eight.json");
    ASSERT_EQ(run({"mc", fixture, "--jobs", "1", "--out-csv", csv1.string(), "--out-summary", sum1.string()}).code, 0);
    ASSERT_EQ(run({"mc", fixture, "--jobs", "8", "--out-csv", csv8.string(), "--out-summary", sum8.string()}).code, 0);
    EXPECT_EQ(slurp(csv1), slurp(csv8));
    EXPECT_EQ(slurp(sum1), slurp(sum8));
    EXPECT_EQ(slurp(csv1).rfind("image_id,n_objects,mc\n", 0), 0u);
    EXPECT_EQ(json::parse(slurp(sum1))["n_records"], 80);
}

TEST(CliMc, EmptyDatasetReportsNoData) {
    const auto p = write("empty.json", R"({"images": [{"id": 1, "width": 4, "height": 4}], "annotations": []})");
    const auto r = run({"mc", p.string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("no data"), std::string::npos);
}

TEST(CliMc, MissingFileIsUsageError) {
    const auto r = run({"mc", "/nonexistent/coco.json"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("/nonexistent/coco.json"), std::string::npos) << r.err;
}

TEST(CliEncode, IdenticalBoxesAndScaledCopies) {
    const auto p = write("boxes.json", "[[0.5, 0.5, 0.2, 0.2], [0.5, 0.5, 0.2, 0.2], [0.25, 0.75, 0.125, 0.25]]");
    const auto q = write("scaled.json", "[[1.0, 1.0, 0.4, 0.4], [1.0, 1.0, 0.4, 0.4], [0.5, 1.5, 0.25, 0.5]]");
    const auto a = run({"encode", p.string(), "--profile", "toy"});
    ASSERT_EQ(a.code, 0) << a.err;
    const auto doc = json::parse(a.out);
    EXPECT_EQ(doc["features_shape"], json::array({3, 3, 4}));
    EXPECT_EQ(doc["embedding_shape"], json::array({3, 3, 64}));
    EXPECT_EQ(doc["bias_shape"], json::array({3, 3, 4}));
    for (int c = 0; c < 4; ++c) {
        EXPECT_EQ(doc["features"][0][0][c], 0.0);
        EXPECT_EQ(doc["features"][0][1][c], 0.0);
    }
    const auto b = json::parse(run({"encode", q.string(), "--profile", "toy"}).out);
    EXPECT_EQ(doc["features"], b["features"]);
    EXPECT_EQ(doc["bias"], b["bias"]);
    for (const auto& row : doc["bias"])
        for (const auto& cell : row)
            for (double v : cell) EXPECT_GE(v, 1e-6);
}

TEST(CliEncode, PaperProfileWidths) {
    const auto p = write("two.json", "[[0.5, 0.5, 0.2, 0.2], [0.3, 0.4, 0.1, 0.3]]");
    const auto doc = json::parse(run({"encode", p.string()}).out);
    EXPECT_EQ(doc["embedding_shape"], json::array({2, 2, 64}));
    EXPECT_EQ(doc["bias_shape"], json::array({2, 2, 8}));
    EXPECT_EQ(doc["metadata"]["temperature"], 10000.0);
}

TEST(CliEncode, MalformedInput) {
    EXPECT_EQ(run({"encode", write("bad1.json", "[[0.5, 0.5, 0.2]]").string()}).code, 2);
    EXPECT_EQ(run({"encode", write("bad2.json", "[[0.5, 0.5, -0.2, 0.1]]").string()}).code, 2);
    EXPECT_EQ(run({"encode", write("bad3.json", "{").string()}).code, 2);
}

TEST(CliToy, UnknownVariantShowsUsage) {
    const auto r = run({"toy", "--variant", "contrast"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE((r.out + r.err).find("--variant"), std::string::npos);
}

TEST(CliToy, SingleStepReport) {
    const auto cfg = write("small.json", R"({"layers": 1, "num_matching": 8, "num_hybrid": 12, "num_scenes": 5})");
    const auto ckpt = scratch("model.json");
    const auto r = run({"toy", "--steps", "1", "--config", cfg.string(), "--checkpoint", ckpt.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = json::parse(r.out);
    EXPECT_EQ(doc["losses"].size(), 1u);
    EXPECT_EQ(doc["variant"], "relation+contrast");
    EXPECT_EQ(doc["seed"], 7);
    EXPECT_FALSE(doc.contains("wall_ms"));
    EXPECT_TRUE(fs::exists(ckpt));
    EXPECT_EQ(run({"toy", "--steps", "1", "--config", cfg.string()}).out, r.out);
}

TEST(CliToy, BadConfigKey) {
    const auto cfg = write("typo.json", R"({"layerz": 1})");
    const auto r = run({"toy", "--steps", "1", "--config", cfg.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("layerz"), std::string::npos) << r.err;
}

TEST(CliToy, DivergenceExitCode) {
    const auto cfg = write("diverge.json", R"({"layers": 1, "num_matching": 8, "num_hybrid": 12, "num_scenes": 5, "divergence_threshold": 0.001})");
    EXPECT_EQ(run({"toy", "--steps", "3", "--config", cfg.string()}).code, 3);
}

TEST(CliVerify, HungarianSuite) {
    const auto r = run({"verify", "--suite", "hungarian"});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("PASS [2]"), std::string::npos) << r.out;
}

TEST(Cli, NoSubcommandIsUsageError) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
}
