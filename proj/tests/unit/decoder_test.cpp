#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "reldetr/checkpoint.hpp"
#include "reldetr/decoder.hpp"
#include "reldetr/errors.hpp"
#include "reldetr/gradcheck.hpp"
#include "reldetr/toyexp.hpp"
#include "reldetr/verify/checks.hpp"
#include "test_support.hpp"

using reldetr::Rng;
using reldetr::geom::Box;
namespace nk = reldetr::nk;
namespace decoder = reldetr::decoder;
namespace relenc = reldetr::relenc;
namespace geom = reldetr::geom;

namespace {

decoder::AttentionWeights random_attention(Rng& rng, std::size_t d) {
    auto lin = [&] {
        return decoder::Linear{testing_support::random_tensor(rng, {d, d}, -0.5, 0.5),
                               testing_support::random_tensor(rng, {d}, -0.1, 0.1)};
    };
    return {lin(), lin(), lin(), lin()};
}

relenc::RelationBias bias_tensor(std::size_t n, std::size_t heads, const std::function<double(std::size_t, std::size_t, std::size_t)>& f) {
    std::vector<double> v(n * n * heads);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t h = 0; h < heads; ++h) v[(i * n + j) * heads + h] = f(i, j, h);
    return {nk::Tensor({n, n, heads}, std::move(v))};
}

decoder::Memory memory_for(const decoder::DecoderWeights& w, std::uint64_t seed) {
    const auto scene = reldetr::toyexp::generate_scenes(1, seed, reldetr::toyexp::Correlation::none,
                                                        w.config().num_classes)[0];
    return decoder::build_memory(scene.objects.boxes, scene.objects.labels, w, Rng(seed));
}

std::vector<double> flat(const nk::Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(DecoderConfig, Profiles) {
    const auto toy = decoder::DecoderConfig::toy();
    EXPECT_EQ(toy.layers, 3);
    EXPECT_EQ(toy.d_model, 32);
    EXPECT_EQ(toy.heads, 4);
    EXPECT_EQ(toy.num_matching, 24);
    EXPECT_EQ(toy.num_hybrid, 40);
    EXPECT_EQ(toy.repeat_k, 3);
    EXPECT_EQ(toy.num_classes, 4);
    const auto paper = decoder::DecoderConfig::paper();
    EXPECT_EQ(paper.num_matching, 900);
    EXPECT_EQ(paper.num_hybrid, 1500);
    EXPECT_EQ(paper.repeat_k, 6);
    EXPECT_EQ(paper.relation.temperature, 10000.0);
    EXPECT_EQ(paper.relation.embed_dim, 16);
    EXPECT_EQ(paper.relation.scale, 100.0);
    const auto small = decoder::DecoderConfig::gradcheck();
    EXPECT_EQ(small.layers, 2);
    EXPECT_EQ(small.d_model, 16);
    EXPECT_EQ(small.heads, 2);
    EXPECT_EQ(small.num_matching, 4);
    EXPECT_EQ(small.num_classes, 3);
    for (const auto& c : {toy, paper, small}) EXPECT_NO_THROW(c.validate());
}

TEST(DecoderConfig, Validation) {
    auto c = decoder::DecoderConfig::toy();
    c.heads = 3;
    c.relation.heads = 3;
    EXPECT_THROW(c.validate(), reldetr::InputError);
    c = decoder::DecoderConfig::toy();
    c.relation.heads = 2;
    EXPECT_THROW(c.validate(), reldetr::InputError);
    c = decoder::DecoderConfig::toy();
    c.layers = 0;
    EXPECT_THROW(c.validate(), reldetr::InputError);
    c = decoder::DecoderConfig::toy();
    c.repeat_k = 0;
    EXPECT_THROW(c.validate(), reldetr::InputError);
}

TEST(Anchors, TwoByTwoGrid) {
    const auto a = decoder::anchor_grid(4);
    ASSERT_EQ(a.size(), 4u);
    EXPECT_EQ(a[0], Box(0.25, 0.25, 0.25, 0.25));
    EXPECT_EQ(a[1], Box(0.75, 0.25, 0.25, 0.25));
    EXPECT_EQ(a[3], Box(0.75, 0.75, 0.25, 0.25));
    EXPECT_EQ(decoder::anchor_grid(900).size(), 900u);
    EXPECT_EQ(decoder::anchor_grid(7).size(), 7u);
}

TEST(InitQueries, DeterministicPerSeed) {
    const auto cfg = decoder::DecoderConfig::toy();
    decoder::DecoderWeights a(cfg, 3), b(cfg, 3), c(cfg, 4);
    auto [ma, ha] = decoder::init_queries(a);
    auto [mb, hb] = decoder::init_queries(b);
    auto [mc, hc] = decoder::init_queries(c);
    EXPECT_EQ(flat(ma.queries), flat(mb.queries));
    EXPECT_EQ(flat(ha.queries), flat(hb.queries));
    EXPECT_NE(flat(ma.queries), flat(mc.queries));
    EXPECT_EQ(ma.boxes, ma.prev_boxes);
    EXPECT_EQ(ma.size(), 24u);
    EXPECT_EQ(ha.size(), 40u);
}

TEST(Weights, NamedParametersAndIndependentStreams) {
    auto cfg = decoder::DecoderConfig::toy();
    decoder::DecoderWeights w(cfg, 1);
    EXPECT_TRUE(w.params().contains("layer0.self.q.weight"));
    EXPECT_TRUE(w.params().contains("layer2.cls.bias"));
    EXPECT_TRUE(w.params().contains("relation.weight"));
    cfg.num_hybrid = 99;
    decoder::DecoderWeights other(cfg, 1);
    EXPECT_EQ(flat(w.params().get("layer1.cross.v.weight")), flat(other.params().get("layer1.cross.v.weight")));
    EXPECT_EQ(flat(w.matching_embed()), flat(other.matching_embed()));
}

TEST(Attention, SingleQueryReturnsItsValue) {
    Rng rng(1);
    const auto w = random_attention(rng, 8);
    const auto x = testing_support::random_tensor(rng, {1, 8});
    const auto bias = bias_tensor(1, 2, [](auto, auto, auto) { return 5.0; });
    const auto out = decoder::biased_self_attention(x, &bias, w, 2);
    const auto want = w.output(w.value(x));
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out.at(0, i), want.at(0, i), 1e-14);
}

TEST(Attention, RowConstantBiasIsNeutral) {
    Rng rng(2);
    const auto w = random_attention(rng, 8);
    const auto x = testing_support::random_tensor(rng, {5, 8});
    const auto plain = decoder::biased_self_attention(x, nullptr, w, 2);
    const auto eps = bias_tensor(5, 2, [](auto, auto, auto) { return 1e-6; });
    const auto rows = bias_tensor(5, 2, [](std::size_t i, auto, std::size_t h) { return 0.3 * double(i) + 2.0 * double(h); });
    EXPECT_EQ(flat(decoder::biased_self_attention(x, &eps, w, 2)), flat(plain));
    const auto shifted = decoder::biased_self_attention(x, &rows, w, 2);
    for (std::size_t k = 0; k < plain.numel(); ++k) EXPECT_NEAR(shifted.values()[k], plain.values()[k], 1e-12);
}

TEST(Attention, LargeBiasDominates) {
    Rng rng(3);
    auto w = random_attention(rng, 8);
    const auto x = testing_support::random_tensor(rng, {3, 8}, -0.1, 0.1);
    const auto bias = bias_tensor(3, 2, [](std::size_t i, std::size_t j, auto) { return i == 0 && j == 2 ? 20.0 : 1e-6; });
    std::vector<nk::Tensor> probe;
    decoder::biased_self_attention(x, &bias, w, 2, &probe);
    ASSERT_EQ(probe.size(), 2u);
    for (const auto& p : probe) EXPECT_GT(p.at(0, 2), 0.99);
}

TEST(Attention, RowsAreStochastic) {
    Rng rng(4);
    const auto w = random_attention(rng, 16);
    const auto x = testing_support::random_tensor(rng, {6, 16}, -2.0, 2.0);
    const auto bias = bias_tensor(6, 4, [&](auto, auto, auto) { return rng.uniform(1e-6, 3.0); });
    for (const relenc::RelationBias* b : {static_cast<const relenc::RelationBias*>(nullptr), &bias}) {
        std::vector<nk::Tensor> probe;
        decoder::biased_self_attention(x, b, w, 4, &probe);
        for (const auto& p : probe) {
            for (std::size_t r = 0; r < 6; ++r) {
                double total = 0.0;
                for (std::size_t c = 0; c < 6; ++c) total += p.at(r, c);
                EXPECT_NEAR(total, 1.0, 1e-9);
            }
        }
    }
}

TEST(Attention, BiasShapeMismatch) {
    Rng rng(5);
    const auto w = random_attention(rng, 8);
    const auto x = testing_support::random_tensor(rng, {3, 8});
    const auto bias = bias_tensor(4, 2, [](auto, auto, auto) { return 1.0; });
    EXPECT_THROW(decoder::biased_self_attention(x, &bias, w, 2), reldetr::DimensionError);
    EXPECT_THROW(decoder::biased_self_attention(x, nullptr, w, 3), reldetr::DimensionError);
}

TEST(Layer, ZeroDeltaKeepsBoxes) {
    const auto cfg = decoder::DecoderConfig::toy();
    decoder::DecoderWeights w(cfg, 2);
    const auto memory = memory_for(w, 2);
    auto [mq, hq] = decoder::init_queries(w);
    const auto kv = decoder::project_memory(memory, w.layer(0).cross_attn);
    const auto next = decoder::decoder_layer(mq, kv, w, 0, true, decoder::Path::matching);
    ASSERT_EQ(next.boxes.size(), mq.boxes.size());
    for (std::size_t i = 0; i < mq.boxes.size(); ++i) {
        const auto a = mq.boxes[i].as_array();
        const auto b = next.boxes[i].as_array();
        for (int c = 0; c < 4; ++c) EXPECT_NEAR(a[c], b[c], 1e-12);
    }
    EXPECT_EQ(next.prev_boxes, mq.boxes);
    EXPECT_EQ(next.logits.shape(), (nk::Shape{24, 4}));
}

TEST(Layer, ZeroRelationHeadMatchesNoRelation) {
    const auto cfg = decoder::DecoderConfig::toy();
    decoder::DecoderWeights w(cfg, 3);
    w.zero_relation();
    const auto memory = memory_for(w, 3);
    auto [mq, hq] = decoder::init_queries(w);
    const auto with = decoder::contrast_forward(mq, hq, memory, w, {decoder::Mode::infer, true});
    const auto without = decoder::contrast_forward(mq, hq, memory, w, {decoder::Mode::infer, false});
    for (std::size_t l = 0; l < with.matching.size(); ++l) {
        EXPECT_EQ(flat(with.matching[l].boxes), flat(without.matching[l].boxes));
        EXPECT_EQ(flat(with.matching[l].logits), flat(without.matching[l].logits));
    }
}

TEST(Layer, BoxesStayValidThroughManyLayers) {
    auto cfg = decoder::DecoderConfig::toy();
    cfg.layers = 8;
    decoder::DecoderWeights w(cfg, 4);
    // Large random refinement weights push boxes hard.
    Rng rng(4);
    for (int l = 0; l < cfg.layers; ++l) {
        auto v = w.params().get("layer" + std::to_string(l) + ".box.delta.weight").mutable_values();
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    }
    const auto memory = memory_for(w, 4);
    auto [mq, hq] = decoder::init_queries(w);
    const auto out = decoder::contrast_forward(mq, hq, memory, w, {decoder::Mode::train, true});
    for (const auto* path : {&out.matching, &*out.hybrid}) {
        ASSERT_EQ(path->size(), 8u);
        for (const auto& p : *path) {
            for (const auto& b : geom::boxes_from_tensor(p.boxes)) {
                EXPECT_GT(b.w(), 0.0);
                EXPECT_GT(b.h(), 0.0);
            }
        }
    }
}

TEST(Layer, NonFiniteActivationsNameTheLayer) {
    const auto cfg = decoder::DecoderConfig::toy();
    decoder::DecoderWeights w(cfg, 5);
    auto v = w.params().get("layer1.ffn.out.bias").mutable_values();
    v[0] = INFINITY;
    const auto memory = memory_for(w, 5);
    auto [mq, hq] = decoder::init_queries(w);
    try {
        decoder::contrast_forward(mq, hq, memory, w, {decoder::Mode::infer, true});
        FAIL() << "expected NumericError";
    } catch (const reldetr::NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
    }
}

TEST(ContrastForward, ModesAndCounters) {
    const auto cfg = decoder::DecoderConfig::toy();
    decoder::DecoderWeights w(cfg, 6);
    const auto memory = memory_for(w, 6);
    auto [mq, hq] = decoder::init_queries(w);
    decoder::Counters train, infer;
    const auto t = decoder::contrast_forward(mq, hq, memory, w, {decoder::Mode::train, true}, {nullptr, &train});
    const auto i = decoder::contrast_forward(mq, hq, memory, w, {decoder::Mode::infer, true}, {nullptr, &infer});
    EXPECT_EQ(t.matching.size(), 3u);
    ASSERT_TRUE(t.hybrid.has_value());
    EXPECT_EQ(t.hybrid->size(), 3u);
    EXPECT_EQ(t.hybrid->front().boxes.dim(0), 40u);
    EXPECT_FALSE(i.hybrid.has_value());
    EXPECT_EQ(train.attention(decoder::Path::hybrid), 6u);
    EXPECT_EQ(train.relation_encodings, 3u);
    EXPECT_EQ(train.memory_projections, 3u);
    EXPECT_EQ(infer.attention(decoder::Path::hybrid), 0u);
    EXPECT_EQ(infer.feed_forward(decoder::Path::hybrid), 0u);
    EXPECT_EQ(infer.attention(decoder::Path::matching), 6u);
    EXPECT_EQ(flat(t.matching.back().logits), flat(i.matching.back().logits));
}

TEST(ContrastForward, SharedWeightsAffectBothPaths) {
    const auto cfg = decoder::DecoderConfig::toy();
    decoder::DecoderWeights w(cfg, 7);
    const auto memory = memory_for(w, 7);
    auto [mq, hq] = decoder::init_queries(w);
    const auto before = decoder::contrast_forward(mq, hq, memory, w, {decoder::Mode::train, true});
    w.params().get("layer0.ffn.in.weight").mutable_values()[3] += 0.5;
    const auto after = decoder::contrast_forward(mq, hq, memory, w, {decoder::Mode::train, true});
    EXPECT_NE(flat(before.matching[0].logits), flat(after.matching[0].logits));
    EXPECT_NE(flat(before.hybrid->at(0).logits), flat(after.hybrid->at(0).logits));
}

TEST(Memory, ShapeAndOccupancySignal) {
    const auto cfg = decoder::DecoderConfig::toy();
    decoder::DecoderWeights w(cfg, 8);
    const std::vector<Box> boxes{Box(0.5, 0.5, 0.5, 0.5)};
    const std::vector<int> labels{2};
    const auto empty = decoder::build_memory({}, {}, w, Rng(1));
    const auto full = decoder::build_memory(boxes, labels, w, Rng(1));
    EXPECT_EQ(full.tokens.shape(), (nk::Shape{256, 32}));
    EXPECT_EQ(full.positions.size(), 256u);
    // Cell (8, 8) is covered, cell (0, 0) is not.
    const std::size_t covered = 8 * 16 + 8;
    const auto embed = w.class_embed();
    for (std::size_t k = 0; k < 32; ++k) {
        EXPECT_NEAR(full.tokens.at(covered, k) - empty.tokens.at(covered, k), embed.at(2, k), 1e-12);
        EXPECT_EQ(full.tokens.at(0, k), empty.tokens.at(0, k));
    }
    EXPECT_THROW(decoder::build_memory(boxes, std::vector<int>{7}, w, Rng(1)), reldetr::InputError);
}

TEST(PositionEncoding, ShapeAndRange) {
    const auto enc = decoder::box_position_encoding(geom::boxes_to_tensor(decoder::anchor_grid(5)), 32);
    EXPECT_EQ(enc.shape(), (nk::Shape{5, 32}));
    for (double v : enc.values()) EXPECT_LE(std::abs(v), 1.0);
    EXPECT_THROW(decoder::box_position_encoding(nk::Tensor::zeros({2, 3}), 32), reldetr::DimensionError);
}

TEST(Gradients, EndToEndIncludingHybridPath) {
    nk::GradcheckOptions options;
    const auto plain = reldetr::verify::gradcheck_end_to_end(21, options, false);
    EXPECT_TRUE(plain.passed) << plain.max_relative_error;
    const auto hybrid = reldetr::verify::gradcheck_end_to_end(21, options, true);
    EXPECT_TRUE(hybrid.passed) << hybrid.max_relative_error;
    EXPECT_LT(hybrid.max_roundoff_quanta, 4.0);
}

TEST(Checkpoint, RoundTripRestoresBits) {
    const auto cfg = decoder::DecoderConfig::gradcheck();
    decoder::DecoderWeights a(cfg, 1), b(cfg, 2);
    const auto doc = decoder::checkpoint_to_json(a.params());
    decoder::checkpoint_from_json(nlohmann::json::parse(doc.dump()), b.params());
    for (std::size_t k = 0; k < a.params().size(); ++k) {
        EXPECT_EQ(flat(a.params().items()[k].value), flat(b.params().items()[k].value));
    }
}

TEST(Checkpoint, StrictNamesAndShapes) {
    const auto small = decoder::DecoderConfig::gradcheck();
    auto other = small;
    other.num_hybrid = 7;
    decoder::DecoderWeights a(small, 1), b(other, 1);
    auto doc = decoder::checkpoint_to_json(a.params());
    EXPECT_THROW(decoder::checkpoint_from_json(doc, b.params()), reldetr::InputError);
    doc["parameters"].erase("relation.bias");
    EXPECT_THROW(decoder::checkpoint_from_json(doc, a.params()), reldetr::InputError);
    EXPECT_THROW(decoder::checkpoint_from_json(nlohmann::json{{"format", "other"}}, a.params()), reldetr::InputError);
}
