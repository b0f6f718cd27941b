#include "reldetr/toyexp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "reldetr/errors.hpp"
#include "reldetr/rng.hpp"

namespace reldetr::toyexp {
namespace {

geom::Box random_box(Rng& rng) {
    const double w = rng.uniform(0.1, 0.4);
    const double h = rng.uniform(0.1, 0.4);
    return {rng.uniform(0.5 * w, 1.0 - 0.5 * w), rng.uniform(0.5 * h, 1.0 - 0.5 * h), w, h};
}

bool inside_unit(double x, double y, double w, double h) {
    return w >= 0.02 && h >= 0.02 && x - 0.5 * w >= 0.0 && x + 0.5 * w <= 1.0 &&
           y - 0.5 * h >= 0.0 && y + 0.5 * h <= 1.0;
}

geom::Box affine_copy(const geom::Box& base, Rng& rng) {
    for (;;) {
        const double alpha = rng.uniform(0.6, 1.4);
        const double beta = rng.uniform(-0.04, 0.04);
        const double x = alpha * base.x() + beta;
        const double y = alpha * base.y() + beta;
        const double w = alpha * base.w() + beta;
        const double h = alpha * base.h() + beta;
        if (inside_unit(x, y, w, h)) return {x, y, w, h};
    }
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

double inverse_config_number(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw InputError("config key '" + key + "' must be a number");
    return v.get<double>();
}

std::vector<Detection> detect(const matching::Prediction& pred, std::size_t image) {
    std::vector<Detection> out;
    auto boxes = geom::boxes_from_tensor(pred.boxes);
    const std::size_t classes = pred.logits.dim(1);
    auto logits = pred.logits.values();
    for (std::size_t q = 0; q < boxes.size(); ++q) {
        const auto row = logits.subspan(q * classes, classes);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        out.push_back({image, boxes[q], static_cast<int>(best), 1.0 / (1.0 + std::exp(-row[best]))});
    }
    return out;
}

}  // namespace

std::string to_string(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::relation: return "relation";
        case Variant::relation_contrast: return "relation+contrast";
    }
    return "?";
}

Variant parse_variant(const std::string& name) {
    if (name == "baseline") return Variant::baseline;
    if (name == "relation") return Variant::relation;
    if (name == "relation+contrast") return Variant::relation_contrast;
    throw InputError("unknown variant '" + name + "' (baseline|relation|relation+contrast)");
}

std::string to_string(Correlation c) { return c == Correlation::none ? "none" : "linear"; }

Correlation parse_correlation(const std::string& name) {
    if (name == "none") return Correlation::none;
    if (name == "linear") return Correlation::linear;
    throw InputError("unknown correlation mode '" + name + "' (none|linear)");
}

std::vector<Scene> generate_scenes(std::size_t n, std::uint64_t seed, Correlation correlation,
                                   int num_classes) {
    if (n < 1) throw InputError("generate_scenes: n must be >= 1");
    if (num_classes < 1) throw InputError("generate_scenes: need at least one class");
    const Rng root = Rng(seed).split("scenes");
    std::vector<Scene> scenes;
    scenes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = root.split(i);
        Scene scene;
        scene.seed = rng.seed();
        const auto count = rng.integer(1, 6);
        std::optional<geom::Box> base;
        if (correlation == Correlation::linear) {
            base = geom::Box(rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.08, 0.2),
                             rng.uniform(0.08, 0.2));
        }
        for (std::int64_t k = 0; k < count; ++k) {
            scene.objects.boxes.push_back(base ? affine_copy(*base, rng) : random_box(rng));
            scene.objects.labels.push_back(static_cast<int>(rng.integer(0, num_classes - 1)));
        }
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

nlohmann::json to_json(const TrainConfig& c) {
    const auto& m = c.model;
    return {
        {"layers", m.layers},
        {"d_model", m.d_model},
        {"heads", m.heads},
        {"num_matching", m.num_matching},
        {"num_hybrid", m.num_hybrid},
        {"repeat_k", m.repeat_k},
        {"ffn_dim", m.ffn_dim},
        {"num_classes", m.num_classes},
        {"memory_height", m.memory_height},
        {"memory_width", m.memory_width},
        {"memory_noise", m.memory_noise},
        {"relation_temperature", m.relation.temperature},
        {"relation_embed_dim", m.relation.embed_dim},
        {"relation_scale", m.relation.scale},
        {"relation_epsilon", m.relation.epsilon},
        {"num_scenes", c.num_scenes},
        {"correlation", to_string(c.correlation)},
        {"learning_rate", c.learning_rate},
        {"momentum", c.momentum},
        {"classification_loss",
         c.loss.classification == matching::ClassificationLoss::focal ? "focal" : "quality_focal"},
        {"w_cls", c.loss.weights.cls},
        {"w_l1", c.loss.weights.l1},
        {"w_giou", c.loss.weights.giou},
        {"focal_alpha", c.loss.alpha},
        {"focal_gamma", c.loss.gamma},
        {"divergence_threshold", c.divergence_threshold},
        {"zero_relation", c.zero_relation},
    };
}

TrainConfig merge_config(const TrainConfig& base, const nlohmann::json& overrides) {
    if (!overrides.is_object()) throw InputError("config override must be a JSON object");
    if (!overrides.is_object()) throw InputError("config overrides must be a JSON object");
    TrainConfig c = base;
    auto& m = c.model;
    for (const auto& [key, v] : overrides.items()) try {
        auto num = [&] { return inverse_config_number(v, key); };
        auto whole = [&] {
            const double d = num();
            if (d != std::floor(d)) throw InputError("config key '" + key + "' must be an integer");
            return static_cast<int>(d);
        };
        if (key == "layers") m.layers = whole();
        else if (key == "d_model") m.d_model = whole();
        else if (key == "heads") m.heads = m.relation.heads = whole();
        else if (key == "num_matching") m.num_matching = whole();
        else if (key == "num_hybrid") m.num_hybrid = whole();
        else if (key == "repeat_k") m.repeat_k = whole();
        else if (key == "ffn_dim") m.ffn_dim = whole();
        else if (key == "num_classes") m.num_classes = whole();
        else if (key == "memory_height") m.memory_height = whole();
        else if (key == "memory_width") m.memory_width = whole();
        else if (key == "memory_noise") m.memory_noise = num();
        else if (key == "relation_temperature") m.relation.temperature = num();
        else if (key == "relation_embed_dim") m.relation.embed_dim = whole();
        else if (key == "relation_scale") m.relation.scale = num();
        else if (key == "relation_epsilon") m.relation.epsilon = num();
        else if (key == "num_scenes") c.num_scenes = static_cast<std::size_t>(std::max(0, whole()));
        else if (key == "correlation") c.correlation = parse_correlation(v.get<std::string>());
        else if (key == "learning_rate") c.learning_rate = num();
        else if (key == "momentum") c.momentum = num();
        else if (key == "classification_loss") {
            const auto s = v.get<std::string>();
            if (s == "focal") c.loss.classification = matching::ClassificationLoss::focal;
            else if (s == "quality_focal") c.loss.classification = matching::ClassificationLoss::quality_focal;
            else throw InputError("classification_loss must be focal or quality_focal");
        } else if (key == "w_cls") c.loss.weights.cls = num();
        else if (key == "w_l1") c.loss.weights.l1 = num();
        else if (key == "w_giou") c.loss.weights.giou = num();
        else if (key == "focal_alpha") c.loss.alpha = num();
        else if (key == "focal_gamma") c.loss.gamma = num();
        else if (key == "divergence_threshold") c.divergence_threshold = num();
        else if (key == "zero_relation") c.zero_relation = v.get<bool>();
        else throw InputError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
        throw InputError("config key '" + key + "' has the wrong type");
    }
    if (c.num_scenes < 2) throw InputError("num_scenes must be >= 2");
    m.validate();
    return c;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng(seed).split("split");
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i - 1)));
        std::swap(idx[i - 1], idx[j]);
    }
    std::size_t train = (n * 8 + 9) / 10;
    if (n >= 2) train = std::min(train, n - 1);
    return {{idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train)},
            {idx.begin() + static_cast<std::ptrdiff_t>(train), idx.end()}};
}

double toy_ap(std::vector<Detection> detections, const std::vector<matching::GroundTruth>& truth) {
    std::size_t total_gt = 0;
    for (const auto& t : truth) total_gt += t.size();
    if (total_gt == 0) return 0.0;
    std::stable_sort(detections.begin(), detections.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    std::vector<std::vector<char>> claimed;
    for (const auto& t : truth) claimed.emplace_back(t.size(), 0);

    std::vector<double> precision, recall;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < detections.size(); ++k) {
        const auto& d = detections[k];
        const auto& gt = truth.at(d.image);
        double best = 0.5;
        std::optional<std::size_t> hit;
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (claimed[d.image][g] || gt.labels[g] != d.label) continue;
            const double v = geom::iou(d.box, gt.boxes[g]);
            if (v >= best) {
                best = v;
                hit = g;
            }
        }
        if (hit) {
            claimed[d.image][*hit] = 1;
            ++tp;
        }
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
    }
    for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < precision.size(); ++k) {
        ap += (recall[k] - prev_recall) * precision[k];
        prev_recall = recall[k];
    }
    return ap;
}

ExperimentReport run_experiment(Variant variant, std::size_t steps, std::uint64_t seed,
                                const TrainConfig& cfg, nk::ParameterSet* trained) {
    if (steps < 1) throw InputError("run_experiment: steps must be >= 1");
    if (cfg.num_scenes < 2) throw InputError("run_experiment: need at least 2 scenes");
    const auto started = std::chrono::steady_clock::now();
    cfg.model.validate();

    ExperimentReport report;
    report.seed = seed;
    report.variant = variant;
    report.config = to_json(cfg);
    report.config_hash = hex64(fnv1a(report.config.dump()));

    const Rng root(seed);
    decoder::DecoderWeights weights(cfg.model, root.split("weights").seed());
    if (cfg.zero_relation) weights.zero_relation();
    const auto scenes = generate_scenes(cfg.num_scenes, root.split("data").seed(), cfg.correlation,
                                        cfg.model.num_classes);
    const auto [train, eval] = split_indices(scenes.size(), root.split("split").seed());
    const Rng memory_rng = root.split("memory");

    const bool use_relation = variant != Variant::baseline;
    const bool contrast = variant == Variant::relation_contrast;
    // Only the contrast variant evaluates the hybrid path while training.
    const decoder::ForwardOptions train_options{contrast ? decoder::Mode::train : decoder::Mode::infer,
                                                use_relation};

    auto forward = [&](std::size_t scene_index, const decoder::ForwardOptions& opts,
                       const decoder::ForwardContext& ctx) {
        const auto& gt = scenes[scene_index].objects;
        auto memory = decoder::build_memory(gt.boxes, gt.labels, weights, memory_rng.split(scene_index));
        auto [mq, hq] = decoder::init_queries(weights);
        return decoder::contrast_forward(mq, hq, memory, weights, opts, ctx);
    };

    auto& params = weights.params();
    std::vector<std::vector<double>> velocity;
    for (const auto& p : params.items()) velocity.emplace_back(p.value.numel(), 0.0);
    const double inv_batch = 1.0 / static_cast<double>(train.size());
    bool warned_undersized = false;

    for (std::size_t step = 0; step < steps; ++step) {
        params.zero_grad();
        StepLoss rec;
        rec.step = step;
        double hybrid = 0.0;
        for (auto s : train) {
            const auto& gt = scenes[s].objects;
            auto out = forward(s, train_options, {});
            auto lm = matching::one_to_one_loss(out.matching, gt, cfg.loss);
            auto objective = lm.graph;
            rec.cls += lm.classification * inv_batch;
            rec.l1 += lm.box_l1 * inv_batch;
            rec.giou += lm.box_giou * inv_batch;
            rec.total += lm.total * inv_batch;
            if (contrast) {
                auto lh = matching::one_to_many_loss(*out.hybrid, gt, cfg.model.repeat_k, cfg.loss);
                if (lh.undersized && !warned_undersized) {
                    report.warnings.push_back("hybrid queries fewer than K x ground truth");
                    warned_undersized = true;
                }
                hybrid += lh.total * inv_batch;
                objective = nk::add(objective, lh.graph);
            }
            nk::scale(objective, inv_batch).backward();
        }
        if (contrast) rec.hybrid_total = hybrid;
        const double watched = rec.total + hybrid;
        if (!std::isfinite(watched)) {
            throw NumericError("non-finite loss at step " + std::to_string(step));
        }
        report.losses.push_back(rec);
        if (watched > cfg.divergence_threshold) {
            report.diverged = true;
            break;
        }
        for (std::size_t k = 0; k < params.items().size(); ++k) {
            auto& p = params.items()[k].value;
            if (!p.has_grad()) continue;
            auto g = p.grad();
            auto v = p.mutable_values();
            for (std::size_t i = 0; i < v.size(); ++i) {
                velocity[k][i] = cfg.momentum * velocity[k][i] + g[i];
                v[i] -= cfg.learning_rate * velocity[k][i];
            }
        }
    }

    if (!report.diverged) {
        std::vector<Detection> detections;
        std::vector<matching::GroundTruth> truth;
        const decoder::ForwardOptions infer{decoder::Mode::infer, use_relation};
        for (std::size_t e = 0; e < eval.size(); ++e) {
            auto out = forward(eval[e], infer, {nullptr, &report.eval_counters, nullptr});
            auto dets = detect(out.matching.back(), e);
            detections.insert(detections.end(), dets.begin(), dets.end());
            truth.push_back(scenes[eval[e]].objects);
        }
        report.toy_ap = toy_ap(std::move(detections), truth);
    }
    if (trained) *trained = params;
    report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return report;
}

nlohmann::json to_json(const ExperimentReport& r, bool include_timing) {
    nlohmann::json losses = nlohmann::json::array();
    for (const auto& l : r.losses) {
        nlohmann::json e = {{"step", l.step}, {"cls", l.cls}, {"l1", l.l1}, {"giou", l.giou}, {"total", l.total}};
        if (l.hybrid_total) e["hybrid_total"] = *l.hybrid_total;
        losses.push_back(std::move(e));
    }
    using decoder::Path;
    const auto& c = r.eval_counters;
    nlohmann::json j = {
        {"config", r.config},
        {"config_hash", r.config_hash},
        {"seed", r.seed},
        {"variant", to_string(r.variant)},
        {"losses", std::move(losses)},
        {"toy_ap", r.toy_ap},
        {"diverged", r.diverged},
        {"eval_counters",
         {{"matching_attention", c.attention(Path::matching)},
          {"matching_ffn", c.feed_forward(Path::matching)},
          {"hybrid_attention", c.attention(Path::hybrid)},
          {"hybrid_ffn", c.feed_forward(Path::hybrid)}}},
        {"warnings", r.warnings},
    };
    if (include_timing) j["wall_ms"] = r.wall_ms;
    return j;
}

}  // namespace reldetr::toyexp
