#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "reldetr/errors.hpp"
#include "reldetr/mcstat.hpp"
#include "reldetr/toyexp.hpp"

namespace toy = reldetr::toyexp;
using reldetr::geom::Box;

namespace {

toy::TrainConfig small_config() {
    toy::TrainConfig cfg;
    cfg.model.layers = 2;
    cfg.model.num_matching = 8;
    cfg.model.num_hybrid = 12;
    cfg.model.memory_height = 6;
    cfg.model.memory_width = 6;
    cfg.num_scenes = 5;
    return cfg;
}

}  // namespace

TEST(Scenes, DeterministicAndInsideUnitSquare) {
    for (auto mode : {toy::Correlation::none, toy::Correlation::linear}) {
        const auto a = toy::generate_scenes(30, 4, mode);
        const auto b = toy::generate_scenes(30, 4, mode);
        const auto c = toy::generate_scenes(30, 5, mode);
        ASSERT_EQ(a.size(), 30u);
        bool differs = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i].objects.boxes, b[i].objects.boxes);
            EXPECT_EQ(a[i].objects.labels, b[i].objects.labels);
            differs = differs || a[i].objects.boxes != c[i].objects.boxes;
            EXPECT_GE(a[i].objects.size(), 1u);
            EXPECT_LE(a[i].objects.size(), 6u);
            for (const auto& box : a[i].objects.boxes) {
                EXPECT_GE(box.x_min(), 0.0);
                EXPECT_GE(box.y_min(), 0.0);
                EXPECT_LE(box.x_max(), 1.0);
                EXPECT_LE(box.y_max(), 1.0);
            }
            for (int label : a[i].objects.labels) EXPECT_TRUE(label >= 0 && label < 4);
        }
        EXPECT_TRUE(differs);
    }
}

TEST(Scenes, PrefixStable) {
    const auto short_run = toy::generate_scenes(5, 11, toy::Correlation::linear);
    const auto long_run = toy::generate_scenes(50, 11, toy::Correlation::linear);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(short_run[i].objects.boxes, long_run[i].objects.boxes);
}

TEST(Scenes, LinearModeHasFullCorrelation) {
    for (const auto& s : toy::generate_scenes(200, 3, toy::Correlation::linear)) {
        const auto r = reldetr::mcstat::image_mc(s.objects.boxes);
        if (s.objects.size() < 2) continue;
        EXPECT_NEAR(*r.mc, 1.0, 1e-9);
    }
}

TEST(Scenes, UncorrelatedModeIsBetween) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : toy::generate_scenes(100, 3, toy::Correlation::none)) {
        const auto r = reldetr::mcstat::image_mc(s.objects.boxes);
        if (!r.mc) continue;
        total += *r.mc;
        ++n;
    }
    ASSERT_GT(n, 0u);
    EXPECT_GT(total / double(n), 0.0);
    EXPECT_LT(total / double(n), 0.95);
}

TEST(Split, EightyTwenty) {
    const auto [train, eval] = toy::split_indices(20, 1);
    EXPECT_EQ(train.size(), 16u);
    EXPECT_EQ(eval.size(), 4u);
    std::set<std::size_t> all(train.begin(), train.end());
    all.insert(eval.begin(), eval.end());
    EXPECT_EQ(all.size(), 20u);
    EXPECT_EQ(toy::split_indices(20, 1), toy::split_indices(20, 1));
    const auto [t2, e2] = toy::split_indices(2, 1);
    EXPECT_EQ(t2.size(), 1u);
    EXPECT_EQ(e2.size(), 1u);
}

TEST(ToyAp, PerfectAndEmpty) {
    std::vector<reldetr::matching::GroundTruth> truth(2);
    truth[0].boxes = {Box(0.3, 0.3, 0.2, 0.2), Box(0.7, 0.7, 0.2, 0.2)};
    truth[0].labels = {0, 1};
    truth[1].boxes = {Box(0.5, 0.5, 0.4, 0.4)};
    truth[1].labels = {2};
    std::vector<toy::Detection> perfect{{0, Box(0.3, 0.3, 0.2, 0.2), 0, 0.9},
                                        {0, Box(0.7, 0.7, 0.2, 0.2), 1, 0.8},
                                        {1, Box(0.5, 0.5, 0.4, 0.4), 2, 0.7}};
    EXPECT_DOUBLE_EQ(toy::toy_ap(perfect, truth), 1.0);
    EXPECT_EQ(toy::toy_ap({}, truth), 0.0);

    auto wrong_label = perfect;
    wrong_label[2].label = 1;
    EXPECT_NEAR(toy::toy_ap(wrong_label, truth), 2.0 / 3.0, 1e-12);

    // A confident false positive ranked first costs precision at every recall level.
    auto noisy = perfect;
    noisy.push_back({1, Box(0.1, 0.1, 0.05, 0.05), 2, 0.99});
    EXPECT_NEAR(toy::toy_ap(noisy, truth), 0.75, 1e-12);

    // Duplicates of one object count once.
    std::vector<toy::Detection> dup{{0, Box(0.5, 0.5, 0.4, 0.4), 2, 0.9}, {0, Box(0.5, 0.5, 0.4, 0.4), 2, 0.8}};
    EXPECT_NEAR(toy::toy_ap(dup, {truth[1]}), 1.0, 1e-12);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
    const toy::TrainConfig base;
    const auto j = toy::to_json(base);
    EXPECT_EQ(j["layers"], 3);
    EXPECT_EQ(j["learning_rate"], 1e-2);
    const auto same = toy::merge_config(base, j);
    EXPECT_EQ(toy::to_json(same), j);
    const auto changed = toy::merge_config(base, {{"num_scenes", 8}, {"correlation", "none"}});
    EXPECT_EQ(changed.num_scenes, 8u);
    EXPECT_EQ(changed.correlation, toy::Correlation::none);
    EXPECT_THROW(toy::merge_config(base, {{"learning_rat", 1.0}}), reldetr::InputError);
    EXPECT_THROW(toy::merge_config(base, {{"layers", "three"}}), reldetr::InputError);
    EXPECT_THROW(toy::merge_config(base, {{"heads", 3}}), reldetr::InputError);
}

TEST(Variant, Names) {
    for (auto v : {toy::Variant::baseline, toy::Variant::relation, toy::Variant::relation_contrast}) {
        EXPECT_EQ(toy::parse_variant(toy::to_string(v)), v);
    }
    EXPECT_EQ(toy::to_string(toy::Variant::relation_contrast), "relation+contrast");
    EXPECT_THROW(toy::parse_variant("contrast"), reldetr::InputError);
}

TEST(Experiment, ZeroStepsRejected) {
    EXPECT_THROW(toy::run_experiment(toy::Variant::baseline, 0, 1, small_config()), reldetr::InputError);
}

TEST(Experiment, ReportsAreReproducible) {
    const auto cfg = small_config();
    for (auto v : {toy::Variant::baseline, toy::Variant::relation, toy::Variant::relation_contrast}) {
        const auto a = toy::to_json(toy::run_experiment(v, 3, 9, cfg)).dump();
        const auto b = toy::to_json(toy::run_experiment(v, 3, 9, cfg)).dump();
        EXPECT_EQ(a, b) << toy::to_string(v);
    }
}

TEST(Experiment, ReportShape) {
    const auto r = toy::run_experiment(toy::Variant::relation_contrast, 2, 9, small_config());
    ASSERT_EQ(r.losses.size(), 2u);
    EXPECT_EQ(r.losses[0].step, 0u);
    EXPECT_TRUE(r.losses[0].hybrid_total.has_value());
    EXPECT_FALSE(r.diverged);
    EXPECT_EQ(r.eval_counters.attention(reldetr::decoder::Path::hybrid), 0u);
    EXPECT_GT(r.eval_counters.attention(reldetr::decoder::Path::matching), 0u);
    const auto j = toy::to_json(r);
    EXPECT_FALSE(j.contains("wall_ms"));
    EXPECT_TRUE(toy::to_json(r, true).contains("wall_ms"));
    EXPECT_EQ(j["variant"], "relation+contrast");
    EXPECT_EQ(j["config_hash"].get<std::string>().size(), 16u);
    EXPECT_TRUE(j["losses"][0].contains("hybrid_total"));

    const auto base = toy::run_experiment(toy::Variant::baseline, 1, 9, small_config());
    ASSERT_EQ(base.losses.size(), 1u);
    EXPECT_FALSE(base.losses[0].hybrid_total.has_value());
}

TEST(Experiment, TrainingLowersTheLoss) {
    const auto r = toy::run_experiment(toy::Variant::baseline, 15, 2, small_config());
    EXPECT_LT(r.losses.back().total, r.losses.front().total);
}

TEST(Experiment, DivergenceIsFlagged) {
    auto cfg = small_config();
    cfg.divergence_threshold = 1e-3;
    const auto r = toy::run_experiment(toy::Variant::baseline, 5, 2, cfg);
    EXPECT_TRUE(r.diverged);
    EXPECT_EQ(r.losses.size(), 1u);
}

TEST(Experiment, TrainedParametersAreReturned) {
    reldetr::nk::ParameterSet trained;
    toy::run_experiment(toy::Variant::relation, 1, 2, small_config(), &trained);
    EXPECT_TRUE(trained.contains("relation.weight"));
    EXPECT_GT(trained.scalar_count(), 0u);
}
