#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reldetr/decoder.hpp"
#include "reldetr/matching.hpp"

namespace reldetr::toyexp {

enum class Correlation { none, linear };

struct Scene {
    matching::GroundTruth objects;  // 1-6 boxes inside the unit square
    std::uint64_t seed = 0;
};

/// Deterministic per (n, seed, mode). In `linear` mode every box of a scene
/// is alpha * base + beta for one base box, so each scene has MC = 1.
std::vector<Scene> generate_scenes(std::size_t n, std::uint64_t seed, Correlation correlation,
                                   int num_classes = 4);

enum class Variant { baseline, relation, relation_contrast };

std::string to_string(Variant v);
/// Accepts "baseline", "relation", "relation+contrast"; throws InputError.
Variant parse_variant(const std::string& name);
std::string to_string(Correlation c);
Correlation parse_correlation(const std::string& name);

struct TrainConfig {
    decoder::DecoderConfig model = decoder::DecoderConfig::toy();
    std::size_t num_scenes = 20;
    Correlation correlation = Correlation::linear;
    double learning_rate = 1e-2;
    double momentum = 0.0;
    matching::LossOptions loss;
    double divergence_threshold = 1e6;
    /// Start the relation head at W = 0, B = 0.
    bool zero_relation = false;
};

/// Flat JSON view of a config (one key per field).
nlohmann::json to_json(const TrainConfig& cfg);
/// Overrides top-level keys of `base` with those in `overrides`; unknown
/// keys are rejected with InputError.
TrainConfig merge_config(const TrainConfig& base, const nlohmann::json& overrides);

struct StepLoss {
    std::size_t step = 0;
    double cls = 0.0;
    double l1 = 0.0;
    double giou = 0.0;
    double total = 0.0;  // L_m
    std::optional<double> hybrid_total;  // L_h, contrast variant only
};

struct ExperimentReport {
    nlohmann::json config;
    std::string config_hash;
    std::uint64_t seed = 0;
    Variant variant = Variant::baseline;
    std::vector<StepLoss> losses;
    double toy_ap = 0.0;
    bool diverged = false;
    decoder::Counters eval_counters;
    std::vector<std::string> warnings;
    double wall_ms = 0.0;
};

/// Trains the toy decoder with plain (optionally momentum) gradient descent,
/// full batch over the training split, and scores toy-AP on the held-out
/// split. Throws InputError for steps == 0 and NumericError (with the step
/// index) on a non-finite loss. A loss above the divergence threshold stops
/// training and flags the report. `trained`, when given, receives the final
/// parameters.
ExperimentReport run_experiment(Variant variant, std::size_t steps, std::uint64_t seed,
                                const TrainConfig& cfg = {}, nk::ParameterSet* trained = nullptr);

/// Report as JSON. `wall_ms` is written only when `include_timing` is set,
/// so that the default bytes depend on (variant, steps, seed, config) alone.
nlohmann::json to_json(const ExperimentReport& report, bool include_timing = false);

struct Detection {
    std::size_t image = 0;
    geom::Box box;
    int label = 0;
    double confidence = 0.0;
};

/// Greedy exact-match score: detections ranked by confidence, a hit needs
/// IoU >= 0.5 with an unclaimed ground truth of the same class; the result is
/// the all-point interpolated area under precision/recall.
double toy_ap(std::vector<Detection> detections, const std::vector<matching::GroundTruth>& truth);

/// Deterministic 80/20 split of scene indices (train, eval).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            std::uint64_t seed);

}  // namespace reldetr::toyexp
