#include "reldetr/verify/checks.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <sstream>

#include "reldetr/decoder.hpp"
#include "reldetr/errors.hpp"
#include "reldetr/matching.hpp"
#include "reldetr/mcstat.hpp"
#include "reldetr/relenc.hpp"
#include "reldetr/rng.hpp"
#include "reldetr/toyexp.hpp"
#include "reldetr/verify/oracles.hpp"

namespace reldetr::verify {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string sci(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

bool same_bits(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

template <class Fn>
CheckResult timed(int criterion, std::string name, Fn&& body) {
    CheckResult r;
    r.criterion = criterion;
    r.name = std::move(name);
    const auto start = Clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = seconds_since(start);
    return r;
}

double dyadic(Rng& rng, std::int64_t lo, std::int64_t hi) {
    return static_cast<double>(rng.integer(lo, hi)) / 4096.0;
}

std::vector<geom::Box> pixel_boxes(Rng& rng, std::size_t n) {
    std::vector<geom::Box> out;
    for (std::size_t k = 0; k < n; ++k) {
        out.emplace_back(rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0), rng.uniform(1.0, 200.0),
                         rng.uniform(1.0, 200.0));
    }
    return out;
}

std::string serialize(const std::vector<matching::Prediction>& layers) {
    std::string out;
    for (const auto& p : layers) {
        for (double v : p.boxes.values()) out += mcstat::format_double(v) + ",";
        out += ";";
        for (double v : p.logits.values()) out += mcstat::format_double(v) + ",";
        out += "\n";
    }
    return out;
}

}  // namespace

nk::GradcheckReport gradcheck_end_to_end(std::uint64_t seed, const nk::GradcheckOptions& options,
                                         bool with_hybrid) {
    const auto cfg = decoder::DecoderConfig::gradcheck();
    decoder::DecoderWeights weights(cfg, seed);
    const Rng root(seed);
    const auto gt = toyexp::generate_scenes(1, root.split("scene").seed(), toyexp::Correlation::none,
                                            cfg.num_classes)[0]
                        .objects;
    const auto tiled = gt.tiled(cfg.repeat_k);
    const Rng noise = root.split("noise");
    const matching::LossOptions loss_options;
    const decoder::ForwardOptions forward{with_hybrid ? decoder::Mode::train : decoder::Mode::infer, true};

    nk::DetachTape tape;
    std::optional<matching::MatchPlan> plan, hybrid_plan;
    auto loss = [&] {
        if (tape.mode() == nk::DetachTape::Mode::replay) tape.start_replay();
        auto memory = decoder::build_memory(gt.boxes, gt.labels, weights, noise);
        auto [mq, hq] = decoder::init_queries(weights);
        auto out = decoder::contrast_forward(mq, hq, memory, weights, forward, {&tape});
        if (!plan) plan = matching::plan_matching(out.matching, gt, loss_options);
        auto total = matching::set_loss(out.matching, gt, *plan, loss_options).graph;
        if (with_hybrid) {
            if (!hybrid_plan) hybrid_plan = matching::plan_matching(*out.hybrid, tiled, loss_options);
            total = nk::add(total, matching::set_loss(*out.hybrid, tiled, *hybrid_plan, loss_options).graph);
        }
        return total;
    };
    return nk::gradcheck(loss, weights.params(), options, [&] { tape.start_replay(); });
}

CheckResult check_gradient_integrity(std::size_t seeds, double time_limit_s) {
    return timed(1, "gradient integrity", [&](CheckResult& r) {
        const auto start = Clock::now();
        nk::GradcheckOptions options;
        double worst = 0.0;
        std::string where;
        std::size_t evaluations = 0;
        double quanta = 0.0;
        bool all = true;
        for (std::size_t s = 0; s < seeds; ++s) {
            auto report = gradcheck_end_to_end(s + 1, options);
            evaluations += report.evaluations;
            quanta = std::max(quanta, report.max_roundoff_quanta);
            all = all && report.passed;
            for (const auto& p : report.parameters) {
                if (p.max_relative_error >= worst) {
                    worst = p.max_relative_error;
                    where = "seed " + std::to_string(s + 1) + " " + p.name + "[" +
                            std::to_string(p.worst_index) + "] analytic " + sci(p.analytic) +
                            " numeric " + sci(p.numeric);
                }
            }
        }
        const double elapsed = seconds_since(start);
        r.passed = all && worst < options.tolerance && elapsed < time_limit_s;
        r.detail = "max relative error " + sci(worst) + " (" + where + ") over " +
                   std::to_string(seeds) + " seeds, worst gap " + sci(quanta) +
                   " x ulp(f)/2h, " + std::to_string(evaluations) +
                   " loss evaluations, " + std::to_string(elapsed) + " s";
    });
}

CheckResult check_hungarian_oracle(std::size_t matrices, std::uint64_t seed) {
    return timed(2, "hungarian oracle equivalence", [&](CheckResult& r) {
        const Rng root = Rng(seed).split("hungarian");
        std::size_t equal = 0;
        std::string first_failure;
        for (std::size_t k = 0; k < matrices; ++k) {
            Rng rng = root.split(k);
            const auto n = static_cast<std::size_t>(rng.integer(1, 7));
            const auto m = static_cast<std::size_t>(rng.integer(1, 7));
            matching::CostMatrix cost(n, m);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) {
                    switch (k % 4) {
                        case 0: cost(i, j) = static_cast<double>(rng.integer(0, 3)); break;
                        case 1: cost(i, j) = rng.normal(0.0, 10.0); break;
                        default: cost(i, j) = rng.uniform(); break;
                    }
                }
            }
            const auto fast = matching::hungarian(cost);
            const auto slow = brute_force_assignment(cost);
            std::vector<char> rows(n, 0), cols(m, 0);
            bool injective = fast.pairs.size() == std::min(n, m);
            for (auto [i, j] : fast.pairs) {
                injective = injective && !rows[i] && !cols[j];
                rows[i] = cols[j] = 1;
            }
            if (injective && fast.total_cost == slow.total_cost) {
                ++equal;
            } else if (first_failure.empty()) {
                first_failure = "; first mismatch at matrix " + std::to_string(k) + " (" +
                                std::to_string(n) + "x" + std::to_string(m) + "): " +
                                mcstat::format_double(fast.total_cost) + " vs " +
                                mcstat::format_double(slow.total_cost);
            }
        }
        r.passed = equal == matrices;
        r.detail = std::to_string(equal) + "/" + std::to_string(matrices) +
                   " matrices match exhaustive search exactly" + first_failure;
    });
}

CheckResult check_relation_invariance(std::size_t pairs, std::uint64_t seed) {
    return timed(3, "relation invariance", [&](CheckResult& r) {
        const Rng root = Rng(seed).split("invariance");
        std::size_t exact = 0;
        for (std::size_t k = 0; k < pairs; ++k) {
            Rng rng = root.split(k);
            auto box = [&] {
                return geom::Box(dyadic(rng, 0, 4096), dyadic(rng, 0, 4096), dyadic(rng, 1, 4096),
                                 dyadic(rng, 1, 4096));
            };
            const auto a = box();
            const auto b = box();
            const double s = static_cast<double>(rng.integer(7, 640)) / 64.0;
            const double tx = dyadic(rng, -4 * 4096, 4 * 4096);
            const double ty = dyadic(rng, -4 * 4096, 4 * 4096);
            auto move = [&](const geom::Box& v) {
                return geom::Box(v.x() * s + tx, v.y() * s + ty, v.w() * s, v.h() * s);
            };
            const auto before = geom::relative_geometry(a, b);
            const auto after = geom::relative_geometry(move(a), move(b));
            bool same = true;
            for (int c = 0; c < 4; ++c) same = same && same_bits(before[c], after[c]);
            exact += same;
        }
        r.passed = exact == pairs;
        r.detail = std::to_string(exact) + "/" + std::to_string(pairs) +
                   " pairs bitwise unchanged under joint scale in [0.1, 10] and translation";
    });
}

CheckResult check_shape_contract() {
    return timed(4, "shape contract", [&](CheckResult& r) {
        const auto cfg = decoder::DecoderConfig::paper().relation;
        Rng rng = Rng(4).split("boxes");
        std::vector<geom::Box> boxes;
        for (int k = 0; k < 5; ++k) {
            boxes.emplace_back(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.3),
                               rng.uniform(0.05, 0.3));
        }
        nk::ParameterSet params;
        auto head = relenc::init_relation_head(params, "relation", cfg, Rng(4).split("head"));
        const auto features = geom::relation_matrix(boxes, boxes);
        const auto embed = relenc::sincos_embed(features, cfg);
        const auto bias = relenc::relation_head(embed, head, cfg);

        const auto m = static_cast<std::size_t>(cfg.heads);
        const bool shapes = features.values.shape() == nk::Shape{5, 5, 4} &&
                            embed.shape() == nk::Shape{5, 5, 64} &&
                            bias.values.shape() == nk::Shape{5, 5, m};
        const auto v = bias.values.values();
        const double lowest = *std::min_element(v.begin(), v.end());
        const std::size_t floored =
            static_cast<std::size_t>(std::count(v.begin(), v.end(), cfg.epsilon));
        r.passed = shapes && m == 8 && cfg.epsilon == 1e-6 && lowest >= cfg.epsilon;
        r.detail = "features " + nk::to_string(features.values.shape()) + ", embedding " +
                   nk::to_string(embed.shape()) + ", bias " + nk::to_string(bias.values.shape()) +
                   ", min bias " + sci(lowest) + " (" + std::to_string(floored) + " at the floor)";
    });
}

CheckResult check_constant_bias_neutrality(std::size_t steps, std::uint64_t seed) {
    return timed(5, "constant-bias neutrality", [&](CheckResult& r) {
        toyexp::TrainConfig cfg;
        cfg.zero_relation = true;
        const auto base = toyexp::run_experiment(toyexp::Variant::baseline, steps, seed, cfg);
        const auto rel = toyexp::run_experiment(toyexp::Variant::relation, steps, seed, cfg);
        std::size_t identical = 0;
        const std::size_t n = std::min(base.losses.size(), rel.losses.size());
        for (std::size_t k = 0; k < n; ++k) {
            const auto& a = base.losses[k];
            const auto& b = rel.losses[k];
            identical += same_bits(a.cls, b.cls) && same_bits(a.l1, b.l1) &&
                         same_bits(a.giou, b.giou) && same_bits(a.total, b.total);
        }
        const bool exercised = rel.eval_counters.relation_encodings > 0 &&
                               base.eval_counters.relation_encodings == 0;
        r.passed = base.losses.size() == steps && rel.losses.size() == steps && identical == steps &&
                   exercised && same_bits(base.toy_ap, rel.toy_ap);
        r.detail = std::to_string(identical) + "/" + std::to_string(steps) +
                   " steps bitwise identical; final L_m " + mcstat::format_double(rel.losses.back().total) +
                   (exercised ? "" : "; relation path not exercised");
    });
}

CheckResult check_one_to_one_discipline() {
    return timed(6, "one-to-one discipline", [&](CheckResult& r) {
        const geom::Box g(0.5, 0.5, 0.2, 0.2);
        matching::GroundTruth gt{{g}, {0}};
        const matching::LossOptions options;
        const std::size_t classes = 2;
        std::vector<std::string> problems;

        auto scene = [&](std::size_t queries, std::vector<double> logits) {
            std::vector<geom::Box> boxes(queries, g);
            matching::Prediction pred{geom::boxes_to_tensor(boxes),
                                      nk::Tensor({queries, classes}, std::move(logits), true)};
            return pred;
        };

        // One-to-one: two identical perfect queries, one GT.
        {
            auto pred = scene(2, {0.0, 0.0, 0.0, 0.0});
            const std::vector<matching::Prediction> layers{pred};
            matching::MatchPlan plan;
            auto loss = matching::one_to_one_loss(layers, gt, options, &plan);
            const auto& a = plan.layers[0].assignment;
            const auto oracle = brute_force_assignment(matching::matching_cost(pred, gt, options.weights));
            if (a.pairs.size() != 1) problems.push_back("one-to-one matched " + std::to_string(a.pairs.size()));
            if (a.total_cost != oracle.total_cost) problems.push_back("one-to-one cost differs from oracle");
            if (a.pairs.size() == 1) {
                const std::size_t matched = a.pairs[0].first;
                const std::size_t other = 1 - matched;
                // Focal terms at p = 1/2: positive target 1 on class 0 for the matched query,
                // background (target 0) everywhere else.
                const double p = 0.5;
                const double pos = -options.alpha * std::pow(1.0 - p, options.gamma) * std::log(p);
                const double neg = -(1.0 - options.alpha) * std::pow(p, options.gamma) * std::log(1.0 - p);
                const double expected = pos + 3.0 * neg;
                if (std::abs(loss.classification - expected) > 1e-12) {
                    problems.push_back("classification " + sci(loss.classification) + " != " + sci(expected));
                }
                if (loss.box_l1 != 0.0 || std::abs(loss.box_giou) > 1e-15) {
                    problems.push_back("perfect box incurs box loss");
                }
                loss.graph.backward();
                const auto grad = pred.logits.grad();
                for (std::size_t c = 0; c < classes; ++c) {
                    if (!(grad[other * classes + c] > 0.0)) {
                        problems.push_back("unmatched query not pushed to background");
                    }
                }
                if (!(grad[matched * classes] < 0.0)) problems.push_back("matched query not pushed up");
            }
        }
        // The higher-scoring duplicate wins the single match.
        {
            auto pred = scene(2, {-1.0, 0.0, 1.0, 0.0});
            auto a = matching::hungarian(matching::matching_cost(pred, gt, options.weights));
            if (a.pairs.size() != 1 || a.pairs[0].first != 1) problems.push_back("higher score not preferred");
        }
        // One-to-many, K = 3.
        std::string counts;
        for (std::size_t queries : {2, 3, 5}) {
            auto pred = scene(queries, std::vector<double>(queries * classes, 0.0));
            const std::vector<matching::Prediction> layers{pred};
            matching::MatchPlan plan;
            matching::one_to_many_loss(layers, gt, 3, options, &plan);
            const auto& a = plan.layers[0].assignment;
            const auto oracle =
                brute_force_assignment(matching::matching_cost(pred, gt.tiled(3), options.weights));
            std::vector<char> seen(queries, 0);
            for (auto [q, t] : a.pairs) seen[q] = 1;
            const auto distinct = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
            if (a.pairs.size() != std::min<std::size_t>(queries, 3) || distinct != a.pairs.size()) {
                problems.push_back("one-to-many matched " + std::to_string(a.pairs.size()) + " of " +
                                   std::to_string(queries));
            }
            if (a.total_cost != oracle.total_cost || oracle.pairs.size() != a.pairs.size()) {
                problems.push_back("one-to-many cost differs from oracle");
            }
            counts += (counts.empty() ? "" : ", ") + std::to_string(a.pairs.size()) + "/" +
                      std::to_string(queries);
        }
        r.passed = problems.empty();
        r.detail = r.passed ? "one-to-one matched 1/2; one-to-many (K=3) matched " + counts
                            : problems.front();
    });
}

CheckResult check_mc_correctness(const std::optional<McFixture>& fixture, std::size_t scenes,
                                 std::uint64_t seed) {
    return timed(7, "MC correctness", [&](CheckResult& r) {
        const Rng root = Rng(seed).split("mc");
        std::vector<std::string> problems;

        double worst = 0.0;
        for (std::size_t k = 0; k < scenes; ++k) {
            Rng rng = root.split("random").split(k);
            const auto boxes = pixel_boxes(rng, static_cast<std::size_t>(rng.integer(2, 12)));
            const auto got = mcstat::image_mc(boxes).mc;
            const auto want = mc_oracle(boxes);
            if (!got || !want) {
                problems.push_back("random scene " + std::to_string(k) + " skipped");
                continue;
            }
            worst = std::max(worst, std::abs(*got - *want));
        }
        if (worst > 1e-12) problems.push_back("oracle deviation " + sci(worst));

        std::size_t exact_one = 0, constructed = 0;
        for (std::size_t k = 0; k < 200; ++k) {
            Rng rng = root.split("linear").split(k);
            const auto base = pixel_boxes(rng, 1)[0];
            std::vector<geom::Box> boxes;
            const auto n = rng.integer(2, 8);
            for (std::int64_t j = 0; j < n; ++j) {
                const double alpha = rng.uniform(0.2, 3.0);
                const double beta = k % 2 ? rng.uniform(-0.1, 5.0) : 0.0;
                boxes.emplace_back(alpha * base.x() + beta, alpha * base.y() + beta,
                                   alpha * base.w() + beta, alpha * base.h() + beta);
            }
            ++constructed;
            exact_one += mcstat::image_mc(boxes).mc == 1.0;
        }
        for (const auto& s : toyexp::generate_scenes(100, seed, toyexp::Correlation::linear)) {
            ++constructed;
            if (s.objects.size() < 2) {
                exact_one += !mcstat::image_mc(s.objects.boxes).mc.has_value();
            } else {
                exact_one += mcstat::image_mc(s.objects.boxes).mc == 1.0;
            }
        }
        if (exact_one != constructed) {
            problems.push_back(std::to_string(constructed - exact_one) + " correlated scenes not exactly 1");
        }

        mcstat::AnnotationSet ann;
        Rng rng = root.split("dataset");
        for (std::int64_t id = 1; id <= 400; ++id) {
            ann.images[id * 7 % 401] = {640.0, 480.0};
            const auto n = static_cast<std::size_t>(rng.integer(0, 6));
            if (n > 0) ann.boxes_by_image[id * 7 % 401] = pixel_boxes(rng, n);
        }
        std::size_t below_two = 0;
        for (const auto& [id, info] : ann.images) {
            auto it = ann.boxes_by_image.find(id);
            below_two += it == ann.boxes_by_image.end() || it->second.size() < 2;
        }
        const auto serial = mcstat::dataset_mc(ann, {20, 1});
        const auto parallel = mcstat::dataset_mc(ann, {20, 8});
        if (serial.summary.n_skipped != below_two) problems.push_back("N < 2 images not skipped");
        for (const auto& rec : serial.records) {
            if (rec.n_objects < 2) problems.push_back("record with fewer than two boxes");
        }
        if (mcstat::records_csv(serial.records) != mcstat::records_csv(parallel.records) ||
            mcstat::summary_json(serial.summary).dump() != mcstat::summary_json(parallel.summary).dump()) {
            problems.push_back("jobs 1 and jobs 8 outputs differ");
        }

        std::string fixture_note = "fixture not checked";
        bool fixture_ok = true;
        if (fixture) {
            const auto result = mcstat::dataset_mc(mcstat::load_coco(fixture->annotations));
            const double diff = std::abs(result.summary.mean - fixture->pinned_mean);
            fixture_ok = result.summary.has_data && diff <= 1e-9;
            fixture_note = "fixture mean " + mcstat::format_double(result.summary.mean) + " vs pinned " +
                           mcstat::format_double(fixture->pinned_mean);
            if (!fixture_ok) problems.push_back(fixture_note);
        }
        r.passed = problems.empty();
        r.detail = r.passed ? "oracle max deviation " + sci(worst) + " on " + std::to_string(scenes) +
                                  " scenes; " + std::to_string(constructed) +
                                  " correlated scenes exactly 1; " + std::to_string(below_two) +
                                  " small images skipped; jobs 1 == jobs 8; " + fixture_note
                            : problems.front();
    });
}

CheckResult check_inference_purity(std::uint64_t seed) {
    return timed(8, "inference purity", [&](CheckResult& r) {
        std::vector<std::string> outputs;
        std::vector<std::string> problems;
        std::size_t train_hybrid = 0;
        for (auto [hybrid, k] : {std::pair{40, 3}, std::pair{12, 2}, std::pair{150, 6}}) {
            auto cfg = decoder::DecoderConfig::toy();
            cfg.num_hybrid = hybrid;
            cfg.repeat_k = k;
            decoder::DecoderWeights weights(cfg, seed);
            const auto scenes = toyexp::generate_scenes(3, seed, toyexp::Correlation::none, cfg.num_classes);
            std::string bytes;
            for (std::size_t s = 0; s < scenes.size(); ++s) {
                const auto& gt = scenes[s].objects;
                const auto memory = decoder::build_memory(gt.boxes, gt.labels, weights, Rng(seed).split(s));
                auto [mq, hq] = decoder::init_queries(weights);
                decoder::Counters infer;
                auto out = decoder::contrast_forward(mq, hq, memory, weights,
                                                     {decoder::Mode::infer, true}, {nullptr, &infer});
                if (infer.attention(decoder::Path::hybrid) != 0 || infer.feed_forward(decoder::Path::hybrid) != 0 ||
                    out.hybrid.has_value()) {
                    problems.push_back("hybrid path evaluated at inference");
                }
                if (infer.feed_forward(decoder::Path::matching) != static_cast<std::size_t>(cfg.layers)) {
                    problems.push_back("matching path not fully evaluated");
                }
                bytes += serialize(out.matching);

                decoder::Counters train;
                decoder::contrast_forward(mq, hq, memory, weights, {decoder::Mode::train, true},
                                          {nullptr, &train});
                train_hybrid += train.attention(decoder::Path::hybrid);
            }
            outputs.push_back(std::move(bytes));
        }
        if (train_hybrid == 0) problems.push_back("counters did not see the hybrid path in train mode");
        for (const auto& o : outputs) {
            if (o != outputs.front()) problems.push_back("infer output depends on N_h or K");
        }
        r.passed = problems.empty();
        r.detail = r.passed ? "0 hybrid attention/FFN evaluations in infer mode; " +
                                  std::to_string(outputs.front().size()) +
                                  " output bytes identical for (N_h, K) = (40, 3), (12, 2), (150, 6)"
                            : problems.front();
    });
}

CheckResult check_toy_convergence(std::size_t steps, std::uint64_t seed, double max_ratio,
                                  double time_limit_s) {
    return timed(9, "toy convergence", [&](CheckResult& r) {
        const auto start = Clock::now();
        const auto report = toyexp::run_experiment(toyexp::Variant::relation_contrast, steps, seed);
        const double elapsed = seconds_since(start);
        bool finite = true;
        for (const auto& l : report.losses) {
            finite = finite && std::isfinite(l.total) && std::isfinite(l.hybrid_total.value_or(0.0));
        }
        const double first = report.losses.front().total;
        const double last = report.losses.back().total;
        r.passed = !report.diverged && finite && report.losses.size() == steps &&
                   last <= max_ratio * first && elapsed < time_limit_s;
        r.detail = "L_m " + mcstat::format_double(first) + " -> " + mcstat::format_double(last) +
                   " (ratio " + sci(last / first) + ") in " + std::to_string(elapsed) + " s";
    });
}

std::vector<CheckResult> run_suite(const std::string& suite) {
    std::vector<CheckResult> out;
    const bool all = suite == "all";
    if (!all && suite != "gradcheck" && suite != "hungarian" && suite != "invariants") {
        throw InputError("unknown suite '" + suite + "' (gradcheck|hungarian|invariants|all)");
    }
    if (all || suite == "gradcheck") out.push_back(check_gradient_integrity());
    if (all || suite == "hungarian") out.push_back(check_hungarian_oracle());
    if (all || suite == "invariants") {
        out.push_back(check_relation_invariance());
        out.push_back(check_shape_contract());
        out.push_back(check_constant_bias_neutrality());
        out.push_back(check_one_to_one_discipline());
        out.push_back(check_mc_correctness());
        out.push_back(check_inference_purity());
    }
    return out;
}

std::string format_result(const CheckResult& r) {
    std::ostringstream os;
    os << (r.passed ? "PASS" : "FAIL") << " [" << r.criterion << "] " << r.name << ": " << r.detail;
    return os.str();
}

}  // namespace reldetr::verify
