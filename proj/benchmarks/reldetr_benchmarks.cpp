#include <benchmark/benchmark.h>

#include "reldetr/decoder.hpp"
#include "reldetr/matching.hpp"
#include "reldetr/mcstat.hpp"
#include "reldetr/relenc.hpp"
#include "reldetr/rng.hpp"
#include "reldetr/toyexp.hpp"

namespace {

using reldetr::Rng;
using reldetr::geom::Box;

std::vector<Box> random_boxes(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Box> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.emplace_back(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4),
                         rng.uniform(0.05, 0.4));
    }
    return out;
}

void BM_Hungarian(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto cols = static_cast<std::size_t>(state.range(1));
    Rng rng(1);
    reldetr::matching::CostMatrix cost(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) cost(i, j) = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(reldetr::matching::hungarian(cost));
}
BENCHMARK(BM_Hungarian)->Args({24, 6})->Args({300, 100})->Args({900, 50});

void BM_RelationEncoding(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto cfg = reldetr::decoder::DecoderConfig::paper();
    reldetr::nk::ParameterSet params;
    const auto head = reldetr::relenc::init_relation_head(params, "relation", cfg.relation, Rng(1));
    const auto prev = random_boxes(n, 2), cur = random_boxes(n, 3);
    for (auto _ : state) benchmark::DoNotOptimize(reldetr::relenc::encode_relation(prev, cur, head, cfg.relation));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n));
}
BENCHMARK(BM_RelationEncoding)->Arg(24)->Arg(100)->Arg(300);

void BM_DecoderForward(benchmark::State& state) {
    using namespace reldetr::decoder;
    const auto cfg = DecoderConfig::toy();
    DecoderWeights w(cfg, 1);
    const auto scene = reldetr::toyexp::generate_scenes(1, 1, reldetr::toyexp::Correlation::linear)[0];
    const auto memory = build_memory(scene.objects.boxes, scene.objects.labels, w, Rng(1));
    const auto [mq, hq] = init_queries(w);
    const ForwardOptions options{state.range(0) == 0 ? Mode::infer : Mode::train, true};
    for (auto _ : state) benchmark::DoNotOptimize(contrast_forward(mq, hq, memory, w, options));
}
BENCHMARK(BM_DecoderForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ImageMc(benchmark::State& state) {
    const auto boxes = random_boxes(static_cast<std::size_t>(state.range(0)), 4);
    for (auto _ : state) benchmark::DoNotOptimize(reldetr::mcstat::image_mc(boxes));
}
BENCHMARK(BM_ImageMc)->Arg(5)->Arg(50);

}  // namespace

BENCHMARK_MAIN();
